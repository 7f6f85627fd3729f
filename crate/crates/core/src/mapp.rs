//! Frequency retrieval from a PSD two-fold Toeplitz matrix by matrix pencil
//! and pairing.
//!
//! For `R = D diag(c) D^H` with `D = [d(alpha_k, beta_k)]`, the leading `K`
//! eigenvectors span `range(D)`. Removing the last/first block row exposes
//! a shift by `e^{j alpha}` along the outer level, and removing the last/first
//! row inside every block a shift by `e^{j beta}` along the inner level. Both
//! pencils share the eigenvectors of the unknown mixing matrix, so
//! diagonalizing a random combination `Psi_H + zeta Psi_V` pairs the two
//! frequency sets automatically.

use faer::{Col, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{kron, steering};
use crate::linalg::{hermitian_eigen, solve};
use crate::toeplitz::{toep2, Toep2Coeffs};
use crate::C64;

/// Paired spatial-frequency estimates and their Vandermonde weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqPairEstimates {
    pub pairs: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappOptions {
    /// Eigenvalues below `rank_tol * lambda_max` do not count towards the
    /// numerical rank.
    pub rank_tol: f64,
    /// Minimum separation of combined-pencil eigenvalues, relative to their
    /// largest modulus.
    pub separation_tol: f64,
    pub retries: usize,
    pub seed: u64,
}

impl Default for MappOptions {
    fn default() -> Self {
        Self {
            rank_tol: 1e-2,
            separation_tol: 1e-6,
            retries: 3,
            seed: 0x6d61_7070,
        }
    }
}

pub fn mapp(t_hat: &Toep2Coeffs, k: usize) -> Result<FreqPairEstimates> {
    mapp_with(t_hat, k, &MappOptions::default())
}

pub fn mapp_with(t_hat: &Toep2Coeffs, k: usize, opts: &MappOptions) -> Result<FreqPairEstimates> {
    let (n_h, n_v) = (t_hat.n_h(), t_hat.n_v());
    if k == 0 {
        return Ok(FreqPairEstimates { pairs: vec![], weights: vec![] });
    }
    let max_k = ((n_h - 1) * n_v).min(n_h * (n_v - 1));
    if k > max_k {
        return Err(Error::InvalidParameter(format!(
            "model order {k} exceeds the pencil limit {max_k}"
        )));
    }
    let r = toep2(t_hat);
    let eig = hermitian_eigen(&r)?;
    let top = eig.values[0];
    let rank = if top > 0.0 {
        eig.values.iter().take_while(|&&v| v > opts.rank_tol * top).count()
    } else {
        0
    };
    if k > rank {
        return Err(Error::RankDeficient { requested: k, rank });
    }
    let us = eig.vectors.subcols(0, k).to_owned();

    // outer-level shift: block rows 0..N_H-1 vs 1..N_H
    let h_lo = Mat::from_fn((n_h - 1) * n_v, k, |i, j| us[(i, j)]);
    let h_hi = Mat::from_fn((n_h - 1) * n_v, k, |i, j| us[(i + n_v, j)]);
    // inner-level shift inside each block
    let us = &us;
    let inner = |off: usize| {
        Mat::from_fn(n_h * (n_v - 1), k, move |i, j| {
            let (b, w) = (i / (n_v - 1), i % (n_v - 1));
            us[(b * n_v + w + off, j)]
        })
    };
    let psi_h = pencil(&h_lo, &h_hi);
    let psi_v = pencil(&inner(0), &inner(1));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.retries.max(1) {
        let zeta = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        let combined = Mat::from_fn(k, k, |i, j| psi_h[(i, j)] + zeta * psi_v[(i, j)]);
        let evd = combined
            .eigen()
            .map_err(|e| Error::Numerical(format!("combined pencil eigendecomposition: {e:?}")))?;
        let vals = evd.S().column_vector();
        let scale = (0..k).map(|i| vals[i].norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let min_gap = (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .map(|(i, j)| (vals[i] - vals[j]).norm())
            .fold(f64::INFINITY, f64::min);
        if min_gap < opts.separation_tol * scale {
            continue;
        }
        let t = evd.U().to_owned();
        let t_inv = solve(&t, &Mat::identity(k, k));
        let dh = &t_inv * &psi_h * &t;
        let dv = &t_inv * &psi_v * &t;
        let pairs: Vec<(f64, f64)> = (0..k).map(|i| (dh[(i, i)].arg(), dv[(i, i)].arg())).collect();
        let weights = vandermonde_weights(&r, n_h, n_v, &pairs)?;
        return Ok(FreqPairEstimates { pairs, weights });
    }
    Err(Error::PairingAmbiguity { retries: opts.retries.max(1) })
}

/// Least-squares `Psi` with `lo Psi = hi`.
fn pencil(lo: &Mat<C64>, hi: &Mat<C64>) -> Mat<C64> {
    let gram = lo.adjoint() * lo;
    solve(&gram, &(lo.adjoint() * hi))
}

/// Weights `c` minimizing `||R - D diag(c) D^H||_F`, falling back to the
/// matched-filter value `d^H R d / N^2` for any non-positive entry.
fn vandermonde_weights(r: &Mat<C64>, n_h: usize, n_v: usize, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
    let k = pairs.len();
    let n = (n_h * n_v) as f64;
    let atoms: Vec<Col<C64>> = pairs
        .iter()
        .map(|&(a, b)| kron(&steering(n_h, a), &steering(n_v, b)))
        .collect();
    let gram = Mat::from_fn(k, k, |i, j| {
        let ip = crate::linalg::inner(&atoms[j], &atoms[i]);
        C64::new(ip.norm_sqr(), 0.0)
    });
    let matched: Vec<f64> = atoms
        .iter()
        .map(|d| crate::linalg::inner(&(r * d), d).re)
        .collect();
    let rhs = Mat::from_fn(k, 1, |i, _| C64::new(matched[i], 0.0));
    let c = solve(&gram, &rhs);
    Ok((0..k)
        .map(|i| {
            let v = c[(i, 0)].re;
            if v.is_finite() && v > 0.0 {
                v
            } else {
                (matched[i] / (n * n)).max(f64::MIN_POSITIVE)
            }
        })
        .collect())
}

/// Model order from the largest gap in the log-spectrum of `Toep(T)`,
/// searched over `1..=max_k`.
pub fn detect_order(t_hat: &Toep2Coeffs, max_k: usize) -> Result<usize> {
    let eig = hermitian_eigen(&toep2(t_hat))?;
    let floor = eig.values[0].abs() * 1e-14 + f64::MIN_POSITIVE;
    let logs: Vec<f64> = eig.values.iter().map(|v| v.max(floor).ln()).collect();
    let upto = max_k.min(logs.len() - 1);
    Ok((1..=upto)
        .max_by(|&a, &b| {
            let ga = logs[a - 1] - logs[a];
            let gb = logs[b - 1] - logs[b];
            ga.partial_cmp(&gb).unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(1))
}

/// Wrapped difference of two angles in `(-pi, pi]`.
pub fn wrap_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    if d > std::f64::consts::PI {
        d - std::f64::consts::TAU
    } else {
        d
    }
}
