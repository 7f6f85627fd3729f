//! RIS-BS link, RIS phase schedules and uplink measurement synthesis.

use std::f64::consts::PI;

use faer::{Col, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{exact_response, fresnel_response, spatial_freqs_from_ue, UeGroundTruth, UpaGeometry};
use crate::C64;

/// BS array layout: an `m_antennas`-element ULA along y, centred at
/// `(separation, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsLayout {
    pub m_antennas: usize,
    pub separation: f64,
    /// Antenna spacing in metres; `None` means half a wavelength.
    pub spacing: Option<f64>,
}

impl Default for BsLayout {
    fn default() -> Self {
        Self {
            m_antennas: 15,
            separation: 6.0,
            spacing: None,
        }
    }
}

/// Known, static RIS-BS channel.
#[derive(Debug, Clone)]
pub struct BsRisLink {
    pub bs_element_positions: Vec<[f64; 3]>,
    pub ris_element_positions: Vec<[f64; 3]>,
    /// `M x N` free-space channel.
    pub channel: Mat<C64>,
}

impl BsRisLink {
    pub fn m_antennas(&self) -> usize {
        self.channel.nrows()
    }
}

/// Free-space line-of-sight channel with exact per-element distances:
/// `H[m, n] = lambda / (4 pi d) * exp(-j 2 pi d / lambda)`.
pub fn build_bs_channel(geom: &UpaGeometry, bs: &BsLayout) -> Result<BsRisLink> {
    if bs.m_antennas == 0 {
        return Err(Error::InvalidGeometry("BS needs at least one antenna".into()));
    }
    let lambda = geom.wavelength();
    let spacing = bs.spacing.unwrap_or(lambda / 2.0);
    let centre = (bs.m_antennas as f64 - 1.0) / 2.0;
    let bs_pos: Vec<[f64; 3]> = (0..bs.m_antennas)
        .map(|m| [bs.separation, (m as f64 - centre) * spacing, 0.0])
        .collect();
    let ris_pos = geom.element_positions();

    let mut channel = Mat::<C64>::zeros(bs.m_antennas, geom.n_elements());
    for (m, b) in bs_pos.iter().enumerate() {
        for (n, r) in ris_pos.iter().enumerate() {
            let d = ((b[0] - r[0]).powi(2) + (b[1] - r[1]).powi(2) + (b[2] - r[2]).powi(2)).sqrt();
            if d < 1e-9 {
                return Err(Error::InvalidGeometry(format!(
                    "BS antenna {m} coincides with RIS element {n}"
                )));
            }
            channel[(m, n)] = C64::from_polar(lambda / (4.0 * PI * d), -2.0 * PI * d / lambda);
        }
    }
    Ok(BsRisLink {
        bs_element_positions: bs_pos,
        ris_element_positions: ris_pos,
        channel,
    })
}

/// RIS phase shifts for `L` time slots, one row per slot.
#[derive(Debug, Clone)]
pub struct PhaseSchedule {
    pub phases: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PhaseSchedule {
    /// i.i.d. uniform phases in `[0, 2 pi)`.
    pub fn random(n_slots: usize, n_elements: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = (0..n_slots)
            .map(|_| (0..n_elements).map(|_| rng.random_range(0.0..2.0 * PI)).collect())
            .collect();
        Self { phases, seed }
    }

    pub fn n_slots(&self) -> usize {
        self.phases.len()
    }
}

/// Stacked sensing map `H_bar = [(H Phi(1))^T, ..., (H Phi(L))^T]^T`.
pub fn stacked_sensing(link: &BsRisLink, sched: &PhaseSchedule) -> Result<Mat<C64>> {
    let h = &link.channel;
    let (m, n) = (h.nrows(), h.ncols());
    if let Some(row) = sched.phases.iter().find(|p| p.len() != n) {
        return Err(Error::dims(format!("{n} phases per slot"), row.len()));
    }
    let l = sched.n_slots();
    Ok(Mat::from_fn(m * l, n, |i, j| {
        h[(i % m, j)] * C64::from_polar(1.0, sched.phases[i / m][j])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseModel {
    /// Spherical wavefront with exact element distances.
    #[default]
    Exact,
    /// Second-order (Fresnel) approximation.
    Fresnel,
}

pub fn response(ue: &UeGroundTruth, geom: &UpaGeometry, model: ResponseModel) -> Col<C64> {
    match model {
        ResponseModel::Exact => exact_response(ue, geom),
        ResponseModel::Fresnel => fresnel_response(&spatial_freqs_from_ue(ue, geom), geom),
    }
}

/// Stacked observations `y = H_bar sum_k eta~_k b_k + w`.
#[derive(Debug, Clone)]
pub struct MeasurementStack {
    pub y: Col<C64>,
    pub h_bar: Mat<C64>,
    /// Noiseless part of `y`.
    pub clean: Col<C64>,
    pub noise_var: f64,
    pub seed: u64,
}

impl MeasurementStack {
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }
}

/// Draws `n` i.i.d. circularly-symmetric complex Gaussian samples of unit
/// variance.
pub fn unit_complex_noise(n: usize, seed: u64) -> Col<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Col::from_fn(n, |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Noise-free stacked signal for a scene.
pub fn clean_signal(
    scene: &[UeGroundTruth],
    geom: &UpaGeometry,
    h_bar: &Mat<C64>,
    model: ResponseModel,
) -> Result<Col<C64>> {
    if h_bar.ncols() != geom.n_elements() {
        return Err(Error::dims(format!("{} columns in H_bar", geom.n_elements()), h_bar.ncols()));
    }
    let mut g = Col::<C64>::zeros(geom.n_elements());
    for ue in scene {
        ue.validate()?;
        let b = response(ue, geom, model);
        let c = ue.effective_gain();
        for n in 0..g.nrows() {
            g[n] += c * b[n];
        }
    }
    Ok(h_bar * &g)
}

/// Synthesizes one stacked measurement. Pilots are all ones.
pub fn synthesize(
    scene: &[UeGroundTruth],
    geom: &UpaGeometry,
    link: &BsRisLink,
    sched: &PhaseSchedule,
    noise_var: f64,
    seed: u64,
    model: ResponseModel,
) -> Result<MeasurementStack> {
    if scene.is_empty() {
        return Err(Error::InvalidParameter("scene must contain at least one UE".into()));
    }
    if link.channel.ncols() != geom.n_elements() {
        return Err(Error::dims(
            format!("{} RIS elements in H", geom.n_elements()),
            link.channel.ncols(),
        ));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise variance {noise_var}")));
    }
    let h_bar = stacked_sensing(link, sched)?;
    let clean = clean_signal(scene, geom, &h_bar, model)?;
    let y = if noise_var > 0.0 {
        let w = unit_complex_noise(clean.nrows(), seed);
        let s = noise_var.sqrt();
        Col::from_fn(clean.nrows(), |i| clean[i] + w[i] * s)
    } else {
        clean.clone()
    };
    Ok(MeasurementStack {
        y,
        h_bar,
        clean,
        noise_var,
        seed,
    })
}

/// Noise variance for a per-sample SNR `||clean||^2 / (len * sigma^2)`.
pub fn noise_var_for_snr(clean: &Col<C64>, snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return 0.0;
    }
    let p = clean.squared_norm_l2() / clean.nrows() as f64;
    p / 10f64.powf(snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (UpaGeometry, BsRisLink, PhaseSchedule) {
        let g = UpaGeometry::half_wavelength(15, 0.3).unwrap();
        let link = build_bs_channel(&g, &BsLayout::default()).unwrap();
        let sched = PhaseSchedule::random(10, g.n_elements(), 7);
        (g, link, sched)
    }

    #[test]
    fn channel_shape_and_modulus() {
        let (g, link, _) = setup();
        assert_eq!(link.channel.nrows(), 15);
        assert_eq!(link.channel.ncols(), 225);
        for m in 0..15 {
            for n in 0..225 {
                let b = link.bs_element_positions[m];
                let r = link.ris_element_positions[n];
                let d = ((b[0] - r[0]).powi(2) + (b[1] - r[1]).powi(2) + (b[2] - r[2]).powi(2)).sqrt();
                let h = link.channel[(m, n)];
                assert!((h.norm() - g.wavelength() / (4.0 * PI * d)).abs() < 1e-15);
                assert!(h.re.is_finite() && h.im.is_finite());
            }
        }
    }

    #[test]
    fn doubling_separation_halves_gain() {
        let g = UpaGeometry::half_wavelength(15, 0.3).unwrap();
        let near = build_bs_channel(&g, &BsLayout::default()).unwrap();
        let far = build_bs_channel(&g, &BsLayout { separation: 12.0, ..Default::default() }).unwrap();
        // per-element distances spread by at most the panel/ULA half extents
        for m in 0..15 {
            for n in 0..225 {
                let ratio = far.channel[(m, n)].norm() / near.channel[(m, n)].norm();
                assert!((ratio - 0.5).abs() < 0.04, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn coincident_elements_rejected() {
        let g = UpaGeometry::half_wavelength(3, 0.3).unwrap();
        let bs = BsLayout { m_antennas: 1, separation: 0.0, spacing: None };
        assert!(matches!(build_bs_channel(&g, &bs), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn phases_in_range() {
        let s = PhaseSchedule::random(10, 225, 3);
        assert!(s.phases.iter().flatten().all(|&p| (0.0..2.0 * PI).contains(&p)));
    }

    #[test]
    fn noiseless_single_source_matches_sensing_map() {
        let (g, link, sched) = setup();
        let ue = UeGroundTruth::new(0.2, -0.1, 7.0);
        let m = synthesize(&[ue], &g, &link, &sched, 0.0, 1, ResponseModel::Fresnel).unwrap();
        let b = fresnel_response(&spatial_freqs_from_ue(&ue, &g), &g);
        let expect = &m.h_bar * &b;
        assert_eq!(m.len(), 150);
        assert!((&m.y - &expect).norm_l2() <= 1e-14 * expect.norm_l2());
    }

    #[test]
    fn synthesis_is_deterministic_and_linear() {
        let (g, link, sched) = setup();
        let a = UeGroundTruth::new(0.3, 0.1, 4.0).with_gain(C64::new(0.2, -0.1));
        let b = UeGroundTruth::new(-0.5, -0.2, 11.0).with_gain(C64::new(-0.05, 0.3));
        let m1 = synthesize(&[a, b], &g, &link, &sched, 1e-3, 99, ResponseModel::Exact).unwrap();
        let m2 = synthesize(&[a, b], &g, &link, &sched, 1e-3, 99, ResponseModel::Exact).unwrap();
        for i in 0..m1.len() {
            assert_eq!(m1.y[i].re.to_bits(), m2.y[i].re.to_bits());
            assert_eq!(m1.y[i].im.to_bits(), m2.y[i].im.to_bits());
        }
        let sa = synthesize(&[a], &g, &link, &sched, 0.0, 0, ResponseModel::Exact).unwrap();
        let sb = synthesize(&[b], &g, &link, &sched, 0.0, 0, ResponseModel::Exact).unwrap();
        let sum = &sa.y + &sb.y;
        assert!((&m1.clean - &sum).norm_l2() <= 1e-13 * sum.norm_l2());
    }

    #[test]
    fn noise_has_requested_variance() {
        let w = unit_complex_noise(200_000, 5);
        let v = w.squared_norm_l2() / 200_000.0;
        assert!((v - 1.0).abs() < 0.01);
    }

    #[test]
    fn snr_convention() {
        let clean = Col::from_fn(100, |_| C64::new(2.0, 0.0));
        let v = noise_var_for_snr(&clean, 10.0);
        assert!((v - 0.4).abs() < 1e-12);
        assert_eq!(noise_var_for_snr(&clean, f64::INFINITY), 0.0);
    }

    #[test]
    fn empty_scene_rejected() {
        let (g, link, sched) = setup();
        assert!(synthesize(&[], &g, &link, &sched, 0.0, 0, ResponseModel::Exact).is_err());
    }
}
