//! One Monte Carlo trial: a scene, one measurement, every enabled method.

use std::time::Instant;

use faer::{Col, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use risloc::anm::{default_eps, solve_anm};
use risloc::baselines::{build_polar_dictionary, music3d_ris, omp_with, EffectiveDictionary, PolarDictionary, PolarGrid};
use risloc::channel::{
    build_bs_channel, clean_signal, noise_var_for_snr, response, stacked_sensing, synthesize, unit_complex_noise,
    BsRisLink, MeasurementStack, PhaseSchedule, ResponseModel,
};
use risloc::chirp::{lifting_for_ranges, LiftingOperator};
use risloc::geometry::{UeGroundTruth, UpaGeometry};
use risloc::metrics::trial_errors;
use risloc::recovery::{recover, LocalizeOptions, UeEstimate, NOISELESS_EPS};
use risloc::C64;

use crate::config::{ExperimentConfig, Method};
use crate::scene::{sample_scene, substream};
use crate::HarnessError;

/// One CSV row: errors of one method on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub snr_db: f64,
    pub k: usize,
    pub trial: usize,
    pub rmse_azimuth: Option<f64>,
    pub rmse_elevation: Option<f64>,
    pub rmse_range: Option<f64>,
    pub positioning_error: Option<f64>,
    pub solver_iters: usize,
    pub wall_time_s: f64,
    pub seed: u64,
    /// `ok`, or the failing stage and message.
    pub status: String,
}

impl MetricsRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything shared across trials: geometry, the fixed BS link and phase
/// schedule, the chirp subspaces and the baseline dictionaries.
pub struct Context {
    pub config: ExperimentConfig,
    pub geom: UpaGeometry,
    pub link: BsRisLink,
    pub sched: PhaseSchedule,
    pub h_bar: Mat<C64>,
    pub op: LiftingOperator,
    pub omp: Option<(PolarDictionary, EffectiveDictionary)>,
    pub music_grid: PolarGrid,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let geom = config.geometry()?;
        let link = build_bs_channel(&geom, &config.bs_layout())?;
        let sched = PhaseSchedule::random(config.pilots, geom.n_elements(), config.seeds.phases);
        let h_bar = stacked_sensing(&link, &sched)?;
        let s = &config.subspace;
        let op = lifting_for_ranges(&geom, s.r_min, s.r_max, s.guard, s.j_h, s.j_v, s.grid_size)?;
        let omp = if config.has(Method::Omp) {
            let dict = build_polar_dictionary(&geom, &config.omp_grid())?;
            let eff = dict.effective(&h_bar)?;
            Some((dict, eff))
        } else {
            None
        };
        let music_grid = config.music_grid();
        Ok(Self {
            config,
            geom,
            link,
            sched,
            h_bar,
            op,
            omp,
            music_grid,
        })
    }

    pub fn model(&self) -> ResponseModel {
        self.config.response_model.into()
    }
}

/// Inputs and outputs of a trial, for verbose reporting.
pub struct TrialReport {
    pub scene: Vec<UeGroundTruth>,
    pub measurement: MeasurementStack,
    pub estimates: Vec<(Method, Result<Vec<UeEstimate>, String>)>,
    pub rows: Vec<MetricsRow>,
}

pub fn run_trial(ctx: &Context, snr_db: f64, k: usize, trial: usize, seed: u64) -> Result<Vec<MetricsRow>, HarnessError> {
    Ok(run_trial_report(ctx, snr_db, k, trial, seed)?.rows)
}

/// Noise variance per RIS-side sample for the same per-sample SNR.
fn snapshot_noise_var(clean: &Mat<C64>, snr_db: f64) -> f64 {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return 0.0;
    }
    let len = (clean.nrows() * clean.ncols()) as f64;
    clean.squared_norm_l2() / len / 10f64.powf(snr_db / 10.0)
}

/// Idealized RIS-side snapshots `x(t) = sum_k eta~_k s_k(t) b_k + n(t)` with
/// unit-modulus pilots of random phase.
pub fn ris_snapshots(
    scene: &[UeGroundTruth],
    geom: &UpaGeometry,
    model: ResponseModel,
    slots: usize,
    snr_db: f64,
    seed: u64,
) -> Mat<C64> {
    let n = geom.n_elements();
    let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, 0));
    let bs: Vec<Col<C64>> = scene.iter().map(|u| response(u, geom, model)).collect();
    let mut x = Mat::<C64>::zeros(n, slots);
    for t in 0..slots {
        for (u, b) in scene.iter().zip(bs.iter()) {
            let s = C64::from_polar(1.0, rng.random_range(0.0..2.0 * std::f64::consts::PI)) * u.effective_gain();
            for i in 0..n {
                x[(i, t)] += b[i] * s;
            }
        }
    }
    let var = snapshot_noise_var(&x, snr_db);
    if var > 0.0 {
        let w = unit_complex_noise(n * slots, substream(seed, 1));
        let sd = var.sqrt();
        for t in 0..slots {
            for i in 0..n {
                x[(i, t)] += w[t * n + i] * sd;
            }
        }
    }
    x
}

#[derive(Debug, Clone, Copy)]
struct RowId {
    snr_db: f64,
    k: usize,
    trial: usize,
    seed: u64,
}

fn make_row(
    method: Method,
    id: RowId,
    res: Result<&[UeEstimate], &String>,
    scene: &[UeGroundTruth],
    geom: &UpaGeometry,
    iters: usize,
    wall: f64,
) -> MetricsRow {
    let errs = res
        .map_err(|e| e.clone())
        .and_then(|est| trial_errors(scene, est, geom).map_err(|e| e.at("metrics").to_string()));
    let (vals, status) = match errs {
        Ok(e) => (
            [Some(e.rmse_azimuth), Some(e.rmse_elevation), Some(e.rmse_range), Some(e.positioning_error)],
            "ok".to_string(),
        ),
        Err(msg) => ([None; 4], format!("error: {msg}")),
    };
    MetricsRow {
        method: method.name().to_string(),
        snr_db: id.snr_db,
        k: id.k,
        trial: id.trial,
        rmse_azimuth: vals[0],
        rmse_elevation: vals[1],
        rmse_range: vals[2],
        positioning_error: vals[3],
        solver_iters: iters,
        wall_time_s: wall,
        seed: id.seed,
        status,
    }
}

pub fn run_trial_report(ctx: &Context, snr_db: f64, k: usize, trial: usize, seed: u64) -> Result<TrialReport, HarnessError> {
    let cfg = &ctx.config;
    let geom = &ctx.geom;
    let model = ctx.model();
    let scene = sample_scene(&cfg.scene, geom, k, substream(seed, 0))?;
    let clean = clean_signal(&scene, geom, &ctx.h_bar, model)?;
    let noise_var = noise_var_for_snr(&clean, snr_db);
    let m = synthesize(&scene, geom, &ctx.link, &ctx.sched, noise_var, substream(seed, 1), model)?;

    let mut estimates: Vec<(Method, Result<Vec<UeEstimate>, String>, usize, f64)> = Vec::new();

    let proposed: Vec<Method> = cfg.methods.iter().copied().filter(|m| m.range_estimator().is_some()).collect();
    if !proposed.is_empty() {
        let t0 = Instant::now();
        let eps = if noise_var > 0.0 {
            cfg.solver.eps_scale * default_eps(noise_var, m.len())
        } else {
            NOISELESS_EPS * m.y.norm_l2()
        };
        let sdp = solve_anm(&m.y, &m.h_bar, &ctx.op, eps, &cfg.solver.anm()).map_err(|e| e.at("solve_anm"));
        let solve_time = t0.elapsed().as_secs_f64();
        for method in proposed {
            let t1 = Instant::now();
            let (res, iters) = match &sdp {
                Ok(sdp) => {
                    let opts = LocalizeOptions {
                        anm: cfg.solver.anm(),
                        mapp: cfg.solver.mapp(),
                        eps: Some(eps),
                        noise_var,
                        gamma_bounds: None,
                        range_estimator: method.range_estimator().unwrap_or_default(),
                    };
                    let r = recover(&m.y, &m.h_bar, &ctx.op, k, sdp, &opts).map(|l| l.estimates);
                    (r.map_err(|e| e.to_string()), sdp.stats.iterations)
                }
                Err(e) => (Err(e.to_string()), 0),
            };
            estimates.push((method, res, iters, solve_time + t1.elapsed().as_secs_f64()));
        }
    }
    if let (true, Some((dict, eff))) = (cfg.has(Method::Omp), ctx.omp.as_ref()) {
        let t0 = Instant::now();
        let res = omp_with(&m.y, eff, dict, geom, k)
            .map(|r| r.estimates)
            .map_err(|e| e.at("omp").to_string());
        estimates.push((Method::Omp, res, k, t0.elapsed().as_secs_f64()));
    }
    if cfg.has(Method::MusicRis) {
        let t0 = Instant::now();
        let x = ris_snapshots(&scene, geom, model, cfg.pilots, snr_db, substream(seed, 2));
        let res = music3d_ris(&x, k, &ctx.music_grid, geom, model)
            .map(|r| r.estimates)
            .map_err(|e| e.at("music").to_string());
        estimates.push((Method::MusicRis, res, 0, t0.elapsed().as_secs_f64()));
    }

    let rows = estimates
        .iter()
        .map(|(method, res, iters, wall)| {
            let id = RowId { snr_db, k, trial, seed };
            make_row(*method, id, res.as_ref().map(|v| v.as_slice()), &scene, geom, *iters, *wall)
        })
        .collect();
    Ok(TrialReport {
        scene,
        measurement: m,
        estimates: estimates.into_iter().map(|(m, r, _, _)| (m, r)).collect(),
        rows,
    })
}
