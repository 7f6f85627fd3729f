//! Parameter recovery from an SDP solution: angles from the paired spatial
//! frequencies, ranges from the chirp coefficients in `X_hat`, and effective
//! path gains by least squares on the measurements.

use std::f64::consts::PI;

use faer::{Col, Mat};

use crate::anm::{default_eps, solve_anm, AnmOptions, SdpSolution, SolverStats};
use crate::chirp::{ChirpSubspace, GammaInterval, LiftingOperator};
use crate::error::{Error, Result};
use crate::geometry::{exact_response_at, kron, spherical_to_cartesian, steering_2d, UpaGeometry};
use crate::linalg::{least_squares, solve};
use crate::mapp::{mapp_with, FreqPairEstimates, MappOptions};
use crate::C64;

/// Condition-number limit for the gain least-squares Gram matrix.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Ratio denominators below this modulus are skipped.
const MIN_CHIRP_MODULUS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleEstimate {
    pub azimuth: f64,
    pub elevation: f64,
    /// Set when an arcsin argument had to be clamped to `[-1, 1]`.
    pub clamped: bool,
}

/// `theta = asin(beta lambda / (2 pi d_v))`,
/// `psi = asin(alpha lambda / (2 pi d_h cos theta))`.
pub fn angles_from_freqs(pairs: &FreqPairEstimates, geom: &UpaGeometry) -> Vec<AngleEstimate> {
    pairs
        .pairs
        .iter()
        .map(|&(alpha, beta)| angles_from_pair(alpha, beta, geom))
        .collect()
}

pub fn angles_from_pair(alpha: f64, beta: f64, geom: &UpaGeometry) -> AngleEstimate {
    let k = geom.wavenumber();
    let mut clamped = false;
    let mut clamp = |v: f64| {
        if v.abs() > 1.0 {
            clamped = true;
            v.clamp(-1.0, 1.0)
        } else {
            v
        }
    };
    let elevation = clamp(beta / (k * geom.d_v())).asin();
    let cos_el = elevation.cos();
    let azimuth = if cos_el > 0.0 {
        clamp(alpha / (k * geom.d_h() * cos_el)).asin()
    } else {
        0.0
    };
    AngleEstimate {
        azimuth,
        elevation,
        clamped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeEstimate {
    pub gamma: f64,
    pub range: f64,
    /// Set when the raw estimate fell outside the allowed range interval.
    pub clamped: bool,
}

/// Rank-one factors of one column of `U_hat`, with the first entry of the
/// horizontal factor made real and non-negative.
#[derive(Debug, Clone)]
pub struct ChirpFactors {
    pub sigma: C64,
    pub u_h: Col<C64>,
    pub u_v: Col<C64>,
}

/// `U_hat = X_hat (D^T)^+  = X_hat conj(D) (D^T conj(D))^{-1}`.
pub fn project_onto_atoms(x_hat: &Mat<C64>, pairs: &[(f64, f64)], geom: &UpaGeometry) -> Result<Mat<C64>> {
    let k = pairs.len();
    let n = geom.n_elements();
    if x_hat.ncols() != n {
        return Err(Error::dims(format!("{n} columns in X_hat"), x_hat.ncols()));
    }
    let d = Mat::from_fn(n, k, |_, _| C64::new(0.0, 0.0));
    let mut d = d;
    for (c, &(a, b)) in pairs.iter().enumerate() {
        let col = steering_2d(geom, a, b);
        for i in 0..n {
            d[(i, c)] = col[i];
        }
    }
    let d_conj = Mat::from_fn(n, k, |i, j| d[(i, j)].conj());
    let gram = d.transpose() * &d_conj;
    let cond = crate::linalg::hermitian_condition(&crate::linalg::hermitian_part(&gram))?;
    if !(cond < MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { cond });
    }
    let xd = x_hat * &d_conj;
    // U = xd G^{-1}  <=>  G^T U^T = xd^T
    let ut = solve(&gram.transpose().to_owned(), &xd.transpose().to_owned());
    Ok(ut.transpose().to_owned())
}

/// Best rank-one approximation `sigma u_h u_v^T` of a `J_H J_V` coefficient
/// vector reshaped to `J_H x J_V`.
pub fn rank_one_factors(u: &Col<C64>, j_h: usize, j_v: usize) -> Result<ChirpFactors> {
    if u.nrows() != j_h * j_v {
        return Err(Error::dims(j_h * j_v, u.nrows()));
    }
    let m = Mat::from_fn(j_h, j_v, |i, j| u[i * j_v + j]);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("rank-one factorization: {e:?}")))?;
    let lu = svd.U();
    let lv = svd.V();
    let s = svd.S().column_vector()[0].re;
    let phase = if lu[(0, 0)].norm() > 0.0 {
        lu[(0, 0)] / lu[(0, 0)].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    // M = s u1 v1^H = (s) (u1 / phase) (phase conj(v1))^T
    let u_h = Col::from_fn(j_h, |i| lu[(i, 0)] / phase);
    let u_v = Col::from_fn(j_v, |i| lv[(i, 0)].conj() * phase);
    Ok(ChirpFactors {
        sigma: C64::new(s, 0.0),
        u_h,
        u_v,
    })
}

/// Unit-modulus ratios `q[n+1] q[n-1] / q[n]^2` over the interior indices,
/// skipping near-zero denominators.
pub fn chirp_ratios(q: &Col<C64>) -> Vec<C64> {
    (1..q.nrows().saturating_sub(1))
        .filter(|&n| q[n].norm() >= MIN_CHIRP_MODULUS)
        .filter_map(|n| {
            let r = q[n + 1] * q[n - 1] / (q[n] * q[n]);
            let m = r.norm();
            (m.is_finite() && m > 0.0).then(|| r / m)
        })
        .collect()
}

/// Least-squares chirp rate from per-axis ratio sequences
/// `min sum_x ||rho_x - e^{-j 2 gamma d_x^2} 1||^2`.
pub fn gamma_from_ratios(ratios_h: &[C64], d_h: f64, ratios_v: &[C64], d_v: f64, search: GammaInterval) -> Result<f64> {
    if ratios_h.len() < 2 {
        return Err(Error::DegenerateChirp { axis: "horizontal" });
    }
    if ratios_v.len() < 2 {
        return Err(Error::DegenerateChirp { axis: "vertical" });
    }
    if (d_h - d_v).abs() <= 1e-12 * d_h.max(d_v) {
        let s: C64 = ratios_h.iter().chain(ratios_v.iter()).sum();
        return Ok(-s.arg() / (2.0 * d_h * d_h));
    }
    let cost = |g: f64| -> f64 {
        let eh = C64::from_polar(1.0, -2.0 * g * d_h * d_h);
        let ev = C64::from_polar(1.0, -2.0 * g * d_v * d_v);
        ratios_h.iter().map(|r| (r - eh).norm_sqr()).sum::<f64>()
            + ratios_v.iter().map(|r| (r - ev).norm_sqr()).sum::<f64>()
    };
    Ok(golden_section(cost, search.min, search.max, 1e-12))
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol * (1.0 + a.abs() + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// How `gamma` is read off the per-user chirp coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeEstimator {
    /// Least-squares fit of the neighbour ratios `q[n+1] q[n-1] / q[n]^2`
    /// of the rebuilt chirps.
    #[default]
    ChirpRatio,
    /// Chirp rate whose subspace coefficients best match the recovered
    /// coefficients, `max |c(gamma)^H u|^2 / ||c(gamma)||^2`.
    SubspaceMatch,
    /// Coefficients refit by least squares on the measurements with the
    /// paired angles held fixed, then matched as in `SubspaceMatch`.
    DataRefit,
}

/// Chirp rate and range for every paired frequency, in pair order.
///
/// `allowed` bounds the accepted chirp rates; estimates outside are clamped
/// and flagged.
pub fn estimate_ranges(
    x_hat: &Mat<C64>,
    pairs: &FreqPairEstimates,
    sub_h: &ChirpSubspace,
    sub_v: &ChirpSubspace,
    geom: &UpaGeometry,
    allowed: GammaInterval,
) -> Result<Vec<RangeEstimate>> {
    estimate_ranges_with(x_hat, pairs, sub_h, sub_v, geom, allowed, RangeEstimator::ChirpRatio)
}

pub fn estimate_ranges_with(
    x_hat: &Mat<C64>,
    pairs: &FreqPairEstimates,
    sub_h: &ChirpSubspace,
    sub_v: &ChirpSubspace,
    geom: &UpaGeometry,
    allowed: GammaInterval,
    method: RangeEstimator,
) -> Result<Vec<RangeEstimate>> {
    let u = project_onto_atoms(x_hat, &pairs.pairs, geom)?;
    ranges_from_coefficients(&u, sub_h, sub_v, geom, allowed, method)
}

/// Per-user ranges from a `J_H J_V x K` coefficient matrix.
pub fn ranges_from_coefficients(
    u: &Mat<C64>,
    sub_h: &ChirpSubspace,
    sub_v: &ChirpSubspace,
    geom: &UpaGeometry,
    allowed: GammaInterval,
    method: RangeEstimator,
) -> Result<Vec<RangeEstimate>> {
    (0..u.ncols())
        .map(|k| {
            let col = Col::from_fn(u.nrows(), |i| u[(i, k)]);
            let gamma = match method {
                RangeEstimator::ChirpRatio => {
                    let f = rank_one_factors(&col, sub_h.dim(), sub_v.dim())?;
                    gamma_from_factors(&f, sub_h, sub_v, allowed)?
                }
                RangeEstimator::SubspaceMatch | RangeEstimator::DataRefit => {
                    gamma_by_subspace_match(&col, sub_h, sub_v, allowed)?
                }
            };
            Ok(range_from_gamma(gamma, geom.wavelength(), allowed))
        })
        .collect()
}

/// Least-squares coefficients `U` (`J_H J_V x K`) of
/// `y = H_bar P(sum_k u_k d_k^T)` for fixed pairs, where `d_k` is the 2D
/// steering vector of pair `k`.
pub fn refit_coefficients(y: &Col<C64>, h_bar: &Mat<C64>, op: &LiftingOperator, pairs: &[(f64, f64)]) -> Result<Mat<C64>> {
    let geom = op.geometry();
    let (n, j) = (op.n_elements(), op.coeff_dim());
    if h_bar.ncols() != n || h_bar.nrows() != y.nrows() {
        return Err(Error::dims(format!("{}x{n} sensing map", y.nrows()), format!("{}x{}", h_bar.nrows(), h_bar.ncols())));
    }
    let w = op.weights();
    let mut lifted = Mat::<C64>::zeros(n, j * pairs.len());
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let d = steering_2d(geom, a, b);
        for c in 0..j {
            for i in 0..n {
                lifted[(i, k * j + c)] = d[i] * w[(i, c)];
            }
        }
    }
    let s = h_bar * &lifted;
    let (coef, cond) = least_squares(&s, y)?;
    if !(cond < MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { cond });
    }
    Ok(Mat::from_fn(j, pairs.len(), |c, k| coef[k * j + c]))
}

/// Coarse scan points for [`gamma_by_subspace_match`].
const MATCH_SCAN: usize = 256;

/// Maximizes the normalized correlation between a `J_H J_V` coefficient
/// vector and the coefficients `B_H^H q_H (x) B_V^H q_V` of a rate-`gamma`
/// chirp pair over `search`.
pub fn gamma_by_subspace_match(u: &Col<C64>, sub_h: &ChirpSubspace, sub_v: &ChirpSubspace, search: GammaInterval) -> Result<f64> {
    if u.nrows() != sub_h.dim() * sub_v.dim() {
        return Err(Error::dims(sub_h.dim() * sub_v.dim(), u.nrows()));
    }
    if u.norm_l2() == 0.0 {
        return Err(Error::DegenerateChirp { axis: "both" });
    }
    let score = |g: f64| -> f64 {
        let c = kron(&sub_h.chirp_coefficients(g), &sub_v.chirp_coefficients(g));
        (c.adjoint() * u).norm_sqr() / c.squared_norm_l2()
    };
    let step = (search.max - search.min) / (MATCH_SCAN - 1) as f64;
    let best = (0..MATCH_SCAN)
        .map(|i| search.min + step * i as f64)
        .max_by(|a, b| score(*a).total_cmp(&score(*b)))
        .unwrap_or(search.min);
    let lo = (best - step).max(search.min);
    let hi = (best + step).min(search.max);
    Ok(golden_section(|g| -score(g), lo, hi, 1e-12))
}

/// Rebuilds both chirps from their subspace coefficients and fits `gamma`.
pub fn gamma_from_factors(f: &ChirpFactors, sub_h: &ChirpSubspace, sub_v: &ChirpSubspace, search: GammaInterval) -> Result<f64> {
    let q_h = sub_h.reconstruct(&f.u_h);
    let q_v = sub_v.reconstruct(&f.u_v);
    gamma_from_ratios(&chirp_ratios(&q_h), sub_h.spacing(), &chirp_ratios(&q_v), sub_v.spacing(), search)
}

pub fn range_from_gamma(gamma: f64, wavelength: f64, allowed: GammaInterval) -> RangeEstimate {
    let clamped = !allowed.contains(gamma);
    let g = gamma.clamp(allowed.min, allowed.max);
    RangeEstimate {
        gamma: g,
        range: PI / (wavelength * g),
        clamped,
    }
}

/// One localized user.
#[derive(Debug, Clone, PartialEq)]
pub struct UeEstimate {
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Effective gain `sqrt(p) eta`.
    pub gain: C64,
    /// `gain / sqrt(p)` when the transmit power is known.
    pub path_gain: Option<C64>,
    pub position: [f64; 3],
    /// An angle or the range had to be clamped into its valid domain.
    pub clamped: bool,
}

impl UeEstimate {
    pub fn new(azimuth: f64, elevation: f64, range: f64, geom: &UpaGeometry) -> Self {
        let k = geom.wavenumber();
        Self {
            azimuth,
            elevation,
            range,
            alpha: k * geom.d_h() * azimuth.sin() * elevation.cos(),
            beta: k * geom.d_v() * elevation.sin(),
            gamma: PI / (geom.wavelength() * range),
            gain: C64::new(0.0, 0.0),
            path_gain: None,
            position: spherical_to_cartesian(azimuth, elevation, range),
            clamped: false,
        }
    }
}

/// Least-squares effective gains `(S^H S)^{-1} S^H y` with
/// `S = H_bar [b(est_1), ..., b(est_K)]` using the exact spherical model.
/// `powers`, when given, also fills in `path_gain`.
pub fn estimate_gains(
    y: &Col<C64>,
    h_bar: &Mat<C64>,
    geom: &UpaGeometry,
    estimates: &mut [UeEstimate],
    powers: Option<&[f64]>,
) -> Result<()> {
    let k = estimates.len();
    if k == 0 {
        return Ok(());
    }
    if h_bar.nrows() < k {
        return Err(Error::InvalidParameter(format!(
            "{} measurements cannot resolve {k} gains",
            h_bar.nrows()
        )));
    }
    if y.nrows() != h_bar.nrows() {
        return Err(Error::dims(h_bar.nrows(), y.nrows()));
    }
    let mut b = Mat::<C64>::zeros(geom.n_elements(), k);
    for (c, e) in estimates.iter().enumerate() {
        let col = exact_response_at(e.azimuth, e.elevation, e.range, geom);
        for i in 0..col.nrows() {
            b[(i, c)] = col[i];
        }
    }
    let s = h_bar * &b;
    let (gains, cond) = least_squares(&s, y)?;
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::SingularGram { cond });
    }
    for (i, e) in estimates.iter_mut().enumerate() {
        e.gain = gains[i];
        e.path_gain = powers.map(|p| gains[i] / p[i].sqrt());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizeOptions {
    pub anm: AnmOptions,
    pub mapp: MappOptions,
    /// Data-fit radius; `None` derives it from `noise_var`.
    pub eps: Option<f64>,
    pub noise_var: f64,
    /// Chirp rates accepted by range recovery; `None` uses the subspace
    /// interval.
    pub gamma_bounds: Option<GammaInterval>,
    pub range_estimator: RangeEstimator,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            anm: AnmOptions::default(),
            mapp: MappOptions::default(),
            eps: None,
            noise_var: 0.0,
            gamma_bounds: None,
            range_estimator: RangeEstimator::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub estimates: Vec<UeEstimate>,
    pub solver: SolverStats,
    pub freqs: FreqPairEstimates,
}

/// Relative data-fit radius used when no noise level is known.
pub const NOISELESS_EPS: f64 = 1e-6;

/// Full pipeline: SDP, frequency pairing, angles, ranges, gains.
pub fn localize(
    y: &Col<C64>,
    h_bar: &Mat<C64>,
    op: &LiftingOperator,
    k: usize,
    opts: &LocalizeOptions,
) -> Result<Localization> {
    let eps = opts.eps.unwrap_or_else(|| {
        if opts.noise_var > 0.0 {
            default_eps(opts.noise_var, y.nrows())
        } else {
            NOISELESS_EPS * y.norm_l2()
        }
    });
    let sdp = solve_anm(y, h_bar, op, eps, &opts.anm).map_err(|e| e.at("solve_anm"))?;
    recover(y, h_bar, op, k, &sdp, opts)
}

/// Everything after the SDP: pairing, angles, ranges and gains from a
/// solved block. Lets several range estimators share one solve.
pub fn recover(
    y: &Col<C64>,
    h_bar: &Mat<C64>,
    op: &LiftingOperator,
    k: usize,
    sdp: &SdpSolution,
    opts: &LocalizeOptions,
) -> Result<Localization> {
    let geom = *op.geometry();
    let freqs = mapp_with(&sdp.t_hat, k, &opts.mapp).map_err(|e| e.at("mapp"))?;
    let angles = angles_from_freqs(&freqs, &geom);
    let bounds = opts.gamma_bounds.unwrap_or(op.sub_h().interval());
    let ranges = match opts.range_estimator {
        RangeEstimator::DataRefit => refit_coefficients(y, h_bar, op, &freqs.pairs)
            .and_then(|u| ranges_from_coefficients(&u, op.sub_h(), op.sub_v(), &geom, bounds, RangeEstimator::DataRefit)),
        m => estimate_ranges_with(&sdp.x_hat, &freqs, op.sub_h(), op.sub_v(), &geom, bounds, m),
    }
    .map_err(|e| e.at("estimate_ranges"))?;

    let mut estimates: Vec<UeEstimate> = freqs
        .pairs
        .iter()
        .zip(angles.iter().zip(ranges.iter()))
        .map(|(&(alpha, beta), (ang, rng))| {
            let mut e = UeEstimate::new(ang.azimuth, ang.elevation, rng.range, &geom);
            e.alpha = alpha;
            e.beta = beta;
            e.gamma = rng.gamma;
            e.clamped = ang.clamped || rng.clamped;
            e
        })
        .collect();
    estimate_gains(y, h_bar, &geom, &mut estimates, None).map_err(|e| e.at("estimate_gains"))?;
    Ok(Localization {
        estimates,
        solver: sdp.stats.clone(),
        freqs,
    })
}
