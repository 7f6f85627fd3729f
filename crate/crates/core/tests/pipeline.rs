use num_complex::Complex64 as C64;
use risloc::channel::{build_bs_channel, synthesize, BsLayout, PhaseSchedule, ResponseModel};
use risloc::chirp::{lifting_for_ranges, LiftingOperator};
use risloc::geometry::{UeGroundTruth, UpaGeometry};
use risloc::recovery::{localize, LocalizeOptions, UeEstimate};
use risloc::Error;

struct Setup {
    geom: UpaGeometry,
    op: LiftingOperator,
    sched: PhaseSchedule,
}

fn setup(n_side: usize, slots: usize) -> Setup {
    let geom = UpaGeometry::half_wavelength(n_side, 0.3).unwrap();
    let op = lifting_for_ranges(&geom, 3.0, 15.0, 0.1, 3, 3, 64).unwrap();
    let sched = PhaseSchedule::random(slots, geom.n_elements(), 21);
    Setup { geom, op, sched }
}

fn run(s: &Setup, scene: &[UeGroundTruth]) -> risloc::Result<Vec<UeEstimate>> {
    let link = build_bs_channel(&s.geom, &BsLayout::default()).unwrap();
    let m = synthesize(scene, &s.geom, &link, &s.sched, 0.0, 0, ResponseModel::Fresnel).unwrap();
    localize(&m.y, &m.h_bar, &s.op, scene.len(), &LocalizeOptions::default()).map(|l| l.estimates)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn gain(r: f64) -> C64 {
    C64::from_polar(0.3 / (4.0 * std::f64::consts::PI * r), 0.4)
}

#[test]
fn noiseless_broadside_user_within_a_centimetre() {
    let s = setup(15, 10);
    let ue = UeGroundTruth::new(0.0, 0.0, 5.0).with_gain(gain(5.0));
    let est = run(&s, &[ue]).unwrap();
    assert_eq!(est.len(), 1);
    let err = dist(est[0].position, ue.position());
    assert!(err <= 0.01, "position error {err} m");
    assert!((est[0].gain - ue.effective_gain()).norm() <= 0.05 * ue.effective_gain().norm());
}

#[test]
fn identical_users_are_reported_as_degenerate() {
    let s = setup(15, 10);
    let ue = UeGroundTruth::new(0.3, 0.2, 6.0).with_gain(gain(6.0));
    match run(&s, &[ue, ue]) {
        Err(e) => {
            let root = e.root();
            assert!(
                matches!(root, Error::RankDeficient { .. } | Error::PairingAmbiguity { .. }),
                "unexpected error {e}"
            );
        }
        Ok(est) => panic!("degenerate scene returned estimates {est:?}"),
    }
}

#[test]
fn user_order_only_permutes_estimates() {
    let s = setup(15, 10);
    let a = UeGroundTruth::new(0.5, 0.15, 4.5).with_gain(gain(4.5));
    let b = UeGroundTruth::new(-0.4, -0.25, 8.0).with_gain(gain(8.0) * C64::new(0.0, 1.0));
    let fwd = run(&s, &[a, b]).unwrap();
    let rev = run(&s, &[b, a]).unwrap();
    for e in &fwd {
        let best = rev
            .iter()
            .map(|f| dist(e.position, f.position))
            .fold(f64::INFINITY, f64::min);
        assert!(best <= 1e-6, "no matching estimate, nearest at {best} m");
    }
}
