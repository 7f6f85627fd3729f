//! 2D atomic-norm minimization through its two-fold Toeplitz SDP.
//!
//! Solves
//!
//! ```text
//! min  1/2 tr(Q) + 1/(2N) tr(Toep(T))
//! s.t. || y - H_bar P(X) ||_2 <= eps
//!      [[Q, X], [X^H, Toep(T)]] >= 0
//! ```
//!
//! with ADMM. The PSD block is split into its own variable `Z` (handled by
//! eigenvalue clipping). The data constraint stays with `X`: the `X` step is
//! the Euclidean projection onto `{X : ||y - A X|| <= eps}`, `A = H_bar P`,
//! which reduces to a scalar root search in the eigenbasis of the `ML x ML`
//! matrix `A A^H`.
//!
//! Data and sensing map are normalized before iterating; the program is
//! positively homogeneous, so the solution is scaled back exactly.

use std::io::Write;

use faer::{Col, Mat, Side};

use crate::chirp::LiftingOperator;
use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;
use crate::toeplitz::{toep2, toep2_adjoint, Toep2Coeffs};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct AnmOptions {
    /// Initial ADMM penalty, relative to the data-derived scale
    /// `1 / (20 ||X_mn||)` where `X_mn` is the minimum-norm data fit in the
    /// solver's normalized units.
    pub rho: f64,
    /// Residual balancing: every `balance_every` iterations, scale `rho` by
    /// `rho_scale` when one tolerance-normalized residual exceeds the other
    /// by `balance_ratio`.
    pub adaptive_rho: bool,
    pub balance_every: usize,
    pub balance_ratio: f64,
    pub rho_scale: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Over-relaxation factor in `(0, 2)`; 1 is plain ADMM.
    pub relaxation: f64,
    pub max_iters: usize,
    /// Keep a per-iteration residual history in the returned stats.
    pub record_history: bool,
}

impl Default for AnmOptions {
    fn default() -> Self {
        Self {
            rho: 1.0,
            adaptive_rho: true,
            balance_every: 25,
            balance_ratio: 10.0,
            rho_scale: 2.0,
            abs_tol: 1e-7,
            rel_tol: 1e-5,
            relaxation: 1.6,
            max_iters: 20_000,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Objective of the returned (polished) solution, in original units.
    pub objective: f64,
    /// False when `max_iters` was reached before both residuals met their
    /// tolerances; the solution is still usable.
    pub converged: bool,
    pub final_rho: f64,
    /// Diagonal shift added to restore exact positive semidefiniteness.
    pub psd_shift: f64,
    pub history: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// `(J_H J_V) x N`.
    pub x_hat: Mat<C64>,
    pub t_hat: Toep2Coeffs,
    /// `(J_H J_V) x (J_H J_V)` Hermitian PSD.
    pub q_hat: Mat<C64>,
    pub stats: SolverStats,
}

impl SdpSolution {
    /// `[[Q, X], [X^H, Toep(T)^T]]`.
    pub fn block(&self) -> Mat<C64> {
        assemble_block(&self.q_hat, &self.x_hat, &toep2(&self.t_hat))
    }
}

/// Default data-fit radius: mean plus two standard deviations of `||w||`
/// for `len` samples of variance `noise_var`.
pub fn default_eps(noise_var: f64, len: usize) -> f64 {
    let m = len as f64;
    noise_var.sqrt() * m.sqrt() * (1.0 + 2.0 / m.sqrt())
}

/// Writes `iter,primal_res,dual_res,objective` rows.
pub fn write_history_csv(stats: &SolverStats, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "iter,primal_res,dual_res,objective")?;
    for r in &stats.history {
        writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.primal_res, r.dual_res, r.objective)?;
    }
    Ok(())
}

/// Sensing map `A = H_bar P` with the normalization used by the solver.
struct SensingMap<'a> {
    h_bar: Mat<C64>,
    op: &'a LiftingOperator,
}

impl SensingMap<'_> {
    fn forward(&self, x: &Mat<C64>) -> Col<C64> {
        &self.h_bar * self.op.apply_unchecked(x)
    }

    fn adjoint(&self, v: &Col<C64>) -> Mat<C64> {
        self.op.adjoint_unchecked(&(self.h_bar.adjoint() * v))
    }

    /// `A A^H = H_bar diag(||g_n||^2) H_bar^H`.
    fn gram(&self) -> Mat<C64> {
        let w = self.op.weights();
        let scale: Vec<f64> = (0..w.nrows())
            .map(|n| (0..w.ncols()).map(|c| w[(n, c)].norm_sqr()).sum())
            .collect();
        let hs = Mat::from_fn(self.h_bar.nrows(), self.h_bar.ncols(), |i, j| self.h_bar[(i, j)] * scale[j]);
        &hs * self.h_bar.adjoint()
    }
}

/// Euclidean projection onto `{X : ||y - A X|| <= eps}`.
///
/// With `A A^H = U diag(s) U^H` the projection of `V` is
/// `V + A^H U diag(lambda / (1 + lambda s)) U^H (y - A V)`, where `lambda`
/// puts the residual exactly on the sphere.
struct DataSet<'a> {
    map: SensingMap<'a>,
    y: Col<C64>,
    eps: f64,
    basis: Mat<C64>,
    spectrum: Vec<f64>,
}

impl DataSet<'_> {
    /// `||A^+ y||`.
    fn min_norm_fit(&self) -> f64 {
        let c = self.basis.adjoint() * &self.y;
        (0..c.nrows())
            .map(|i| c[i].norm_sqr() / self.spectrum[i])
            .sum::<f64>()
            .sqrt()
    }

    /// Norm of the part of `y` outside `range(A)`.
    fn unreachable(&self) -> f64 {
        let c = self.basis.adjoint() * &self.y;
        (&self.y - &self.basis * &c).norm_l2()
    }

    fn project(&self, v: &Mat<C64>) -> Mat<C64> {
        let e = &self.y - self.map.forward(v);
        let e_norm = e.norm_l2();
        if e_norm <= self.eps {
            return v.clone();
        }
        let c = self.basis.adjoint() * &e;
        let perp2 = (e_norm * e_norm - c.squared_norm_l2()).max(0.0);
        let target = self.eps * self.eps - perp2;
        let fit = |lam: f64| -> f64 {
            (0..c.nrows())
                .map(|i| c[i].norm_sqr() / (1.0 + lam * self.spectrum[i]).powi(2))
                .sum()
        };
        let lam = if target <= 0.0 {
            f64::INFINITY
        } else {
            let mut hi = 1.0;
            while fit(hi) > target && hi < 1e300 {
                hi *= 4.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = if lo == 0.0 { hi / 4.0 } else { (lo * hi).sqrt() };
                if fit(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            hi
        };
        let w = Col::from_fn(c.nrows(), |i| {
            let s = self.spectrum[i];
            let f = if lam.is_finite() { lam / (1.0 + lam * s) } else { 1.0 / s };
            c[i] * f
        });
        let step = self.map.adjoint(&(&self.basis * &w));
        v + &step
    }
}

pub fn solve_anm(
    y: &Col<C64>,
    h_bar: &Mat<C64>,
    op: &LiftingOperator,
    eps: f64,
    opts: &AnmOptions,
) -> Result<SdpSolution> {
    let n = op.n_elements();
    let j = op.coeff_dim();
    let (n_h, n_v) = (op.geometry().n_h(), op.geometry().n_v());
    if h_bar.ncols() != n {
        return Err(Error::dims(format!("{n} columns in H_bar"), h_bar.ncols()));
    }
    if y.nrows() != h_bar.nrows() {
        return Err(Error::dims(format!("{} measurements", h_bar.nrows()), y.nrows()));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be non-negative, got {eps}")));
    }
    if !(opts.relaxation > 0.0 && opts.relaxation < 2.0) {
        return Err(Error::InvalidParameter(format!("relaxation must lie in (0, 2), got {}", opts.relaxation)));
    }

    let y_norm = y.norm_l2();
    if y_norm <= eps {
        // X = 0 is feasible and attains the minimum objective of zero
        return Ok(SdpSolution {
            x_hat: Mat::zeros(j, n),
            t_hat: Toep2Coeffs::zeros(n_h, n_v),
            q_hat: Mat::zeros(j, j),
            stats: SolverStats {
                iterations: 0,
                primal_residual: 0.0,
                dual_residual: 0.0,
                objective: 0.0,
                converged: true,
                final_rho: opts.rho,
                psd_shift: 0.0,
                history: Vec::new(),
            },
        });
    }

    let raw = SensingMap { h_bar: h_bar.clone(), op };
    let raw_gram = raw.gram();
    let gram_eig = hermitian_eigen(&raw_gram)?;
    let a_norm = gram_eig.values[0].sqrt();
    if !(a_norm > 0.0) {
        return Err(Error::InvalidParameter("sensing map is identically zero".into()));
    }
    // Internally X and Q are stored as sqrt(N) X and N Q. For a rank-one atom
    // this gives the three blocks comparable Frobenius norms, where the
    // Toeplitz block would otherwise outweigh Q by a factor N.
    let bal = n as f64;
    let cutoff = gram_eig.values[0] * 1e-12;
    let rank = gram_eig.values.iter().take_while(|&&v| v > cutoff).count();
    let data = DataSet {
        map: SensingMap {
            h_bar: Mat::from_fn(h_bar.nrows(), n, |r, c| h_bar[(r, c)] / a_norm),
            op,
        },
        y: Col::from_fn(y.nrows(), |i| y[i] * bal.sqrt() / y_norm),
        eps: eps * bal.sqrt() / y_norm,
        basis: gram_eig.vectors.subcols(0, rank).to_owned(),
        spectrum: gram_eig.values[..rank].iter().map(|v| v / (a_norm * a_norm)).collect(),
    };
    let outside = data.unreachable();
    if outside > data.eps * (1.0 + 1e-9) {
        return Err(Error::InfeasibleEps {
            residual: outside * y_norm / bal.sqrt(),
            eps,
        });
    }

    let dim = j + n;
    let mut rho = opts.rho / (20.0 * data.min_norm_fit());
    let mut z = Mat::<C64>::zeros(dim, dim);
    let mut lam = Mat::<C64>::zeros(dim, dim);
    let mut x = Mat::<C64>::zeros(j, n);
    let mut t = Toep2Coeffs::zeros(n_h, n_v);
    let mut q = Mat::<C64>::zeros(j, j);

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let sqrt_dim = dim as f64;
    // X = X_int unit / sqrt(N), Q = Q_int unit / N, T = T_int unit
    let unit = y_norm / a_norm;

    for it in 1..=opts.max_iters {
        iterations = it;
        // (Q, T, X) step against W = Z + Lambda / rho
        let w = Mat::from_fn(dim, dim, |a, b| z[(a, b)] + lam[(a, b)] / rho);
        q = Mat::from_fn(j, j, |a, b| {
            let v = (w[(a, b)] + w[(b, a)].conj()) * 0.5;
            if a == b {
                v - 1.0 / (2.0 * bal * rho)
            } else {
                v
            }
        });
        let w22 = w.submatrix(j, j, n, n).transpose().to_owned();
        t = toep2_adjoint(&w22, n_h, n_v)?;
        t.set(0, 0, t.get(0, 0) - C64::new(1.0 / (2.0 * rho), 0.0));
        for (l, m) in t.clone().lags() {
            let mult = t.multiplicity(l, m);
            t.set(l, m, t.get(l, m) / mult);
        }
        t.symmetrize();
        let v = Mat::from_fn(j, n, |a, c| (w[(a, j + c)] + w[(j + c, a)].conj()) * 0.5);
        x = data.project(&v);

        // Z step on the relaxed block
        let m_blk = assemble_block(&q, &x, &toep2(&t));
        let (ar, br) = (opts.relaxation, 1.0 - opts.relaxation);
        let m_rel = Mat::from_fn(dim, dim, |a, b| m_blk[(a, b)] * ar + z[(a, b)] * br);
        let z_prev = std::mem::replace(
            &mut z,
            project_psd(&Mat::from_fn(dim, dim, |a, b| m_rel[(a, b)] - lam[(a, b)] / rho))?,
        );

        let mut p2 = 0.0;
        for b in 0..dim {
            for a in 0..dim {
                lam[(a, b)] += (z[(a, b)] - m_rel[(a, b)]) * rho;
                p2 += (z[(a, b)] - m_blk[(a, b)]).norm_sqr();
            }
        }
        primal = p2.sqrt();
        dual = rho * (&z - &z_prev).norm_l2();

        let eps_pri = sqrt_dim * opts.abs_tol + opts.rel_tol * z.norm_l2().max(m_blk.norm_l2());
        let eps_dual = sqrt_dim * opts.abs_tol + opts.rel_tol * lam.norm_l2();

        if opts.record_history {
            history.push(IterationRecord {
                iter: it,
                primal_res: primal,
                dual_res: dual,
                objective: internal_objective(&q, &t, bal) * unit,
            });
        }

        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }

        if opts.adaptive_rho && it % opts.balance_every.max(1) == 0 {
            let (pn, dn) = (primal / eps_pri, dual / eps_dual);
            if pn > opts.balance_ratio * dn {
                rho *= opts.rho_scale;
            } else if dn > opts.balance_ratio * pn {
                rho /= opts.rho_scale;
            }
        }
    }

    // X is data-feasible by construction; restore exact PSD by a diagonal
    // shift of Q and Toep(T)
    let blk = assemble_block(&q, &x, &toep2(&t));
    let min_eig = *hermitian_eigen(&blk)?.values.last().unwrap();
    let shift = if min_eig < 0.0 { -min_eig } else { 0.0 };
    if shift > 0.0 {
        for a in 0..j {
            q[(a, a)] += shift;
        }
        t.set(0, 0, t.get(0, 0) + C64::new(shift, 0.0));
    }

    let x_hat = Mat::from_fn(j, n, |a, c| x[(a, c)] * unit / bal.sqrt());
    let q_hat = Mat::from_fn(j, j, |a, b| q[(a, b)] * unit / bal);
    let mut t_hat = t;
    t_hat.scale(unit);
    let obj = objective(&q_hat, &t_hat);

    Ok(SdpSolution {
        x_hat,
        t_hat,
        q_hat,
        stats: SolverStats {
            iterations,
            primal_residual: primal,
            dual_residual: dual,
            objective: obj,
            converged,
            final_rho: rho,
            psd_shift: shift * unit,
            history,
        },
    })
}

/// Objective in the balanced internal variables.
fn internal_objective(q: &Mat<C64>, t: &Toep2Coeffs, bal: f64) -> f64 {
    0.5 * trace_re(q) / bal + 0.5 * t.center().re
}

/// `1/2 tr(Q) + 1/(2N) tr(Toep(T))`; the Toeplitz trace is `N T[0, 0]`.
pub fn objective(q: &Mat<C64>, t: &Toep2Coeffs) -> f64 {
    0.5 * trace_re(q) + 0.5 * t.center().re
}

fn trace_re(q: &Mat<C64>) -> f64 {
    (0..q.nrows()).map(|i| q[(i, i)].re).sum()
}

/// `[[Q, X], [X^H, Toep(T)^T]]`. With atoms `u d^T` the lower-right block
/// is `conj(d) d^T`, so storing its transpose keeps `Toep(T) = d d^H`.
fn assemble_block(q: &Mat<C64>, x: &Mat<C64>, toep: &Mat<C64>) -> Mat<C64> {
    let j = q.nrows();
    let n = toep.nrows();
    Mat::from_fn(j + n, j + n, |a, b| match (a < j, b < j) {
        (true, true) => q[(a, b)],
        (true, false) => x[(a, b - j)],
        (false, true) => x[(b, a - j)].conj(),
        (false, false) => toep[(b - j, a - j)],
    })
}

/// Projection onto the PSD cone by clipping negative eigenvalues.
fn project_psd(a: &Mat<C64>) -> Result<Mat<C64>> {
    let n = a.nrows();
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("PSD projection: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // eigenvalues ascending; `first_pos` splits negative and positive parts
    let first_pos = (0..n).find(|&i| s[i].re > 0.0).unwrap_or(n);
    let n_pos = n - first_pos;
    if n_pos == 0 {
        return Ok(Mat::zeros(n, n));
    }
    if n_pos <= n - n_pos {
        let scaled = Mat::from_fn(n, n_pos, |i, k| u[(i, first_pos + k)] * s[first_pos + k].re);
        let basis = u.subcols(first_pos, n_pos);
        Ok(&scaled * basis.adjoint())
    } else {
        let scaled = Mat::from_fn(n, first_pos, |i, k| u[(i, k)] * s[k].re);
        let basis = u.subcols(0, first_pos);
        let neg = &scaled * basis.adjoint();
        Ok(Mat::from_fn(n, n, |i, k| {
            let h = if i >= k { a[(i, k)] } else { a[(k, i)].conj() };
            h - neg[(i, k)]
        }))
    }
}
