//! Low-dimensional chirp subspaces and the lifting operator that maps an
//! MMV coefficient matrix onto RIS responses.

use std::f64::consts::PI;

use faer::{Col, Mat};

use crate::error::{Error, Result};
use crate::geometry::{chirp, UpaGeometry};
use crate::C64;

/// Range of chirp rates `gamma` (rad/m^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaInterval {
    pub min: f64,
    pub max: f64,
}

impl GammaInterval {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min <= max && min >= 0.0) {
            return Err(Error::EmptyInterval { lo: min, hi: max });
        }
        Ok(Self { min, max })
    }

    /// Interval of `gamma = pi / (lambda r)` for `r` in `[r_min, r_max]`,
    /// widened on both ends by `guard` times its width.
    pub fn from_ranges(r_min: f64, r_max: f64, wavelength: f64, guard: f64) -> Result<Self> {
        if !(r_min > 0.0 && r_max >= r_min) {
            return Err(Error::EmptyInterval { lo: r_min, hi: r_max });
        }
        let lo = PI / (wavelength * r_max);
        let hi = PI / (wavelength * r_min);
        let w = hi - lo;
        Self::new((lo - guard * w).max(0.0), hi + guard * w)
    }

    /// The matching range interval `[r_min, r_max]`.
    pub fn ranges(&self, wavelength: f64) -> (f64, f64) {
        let r_max = if self.min > 0.0 { PI / (wavelength * self.min) } else { f64::INFINITY };
        (PI / (wavelength * self.max), r_max)
    }

    pub fn contains(&self, gamma: f64) -> bool {
        gamma >= self.min && gamma <= self.max
    }

    fn samples(&self, count: usize) -> impl Iterator<Item = f64> + '_ {
        let step = if count > 1 { (self.max - self.min) / (count - 1) as f64 } else { 0.0 };
        (0..count).map(move |i| self.min + step * i as f64)
    }
}

/// Orthonormal basis approximating the chirps `q(d^2 gamma)` over an
/// interval of `gamma`.
#[derive(Debug, Clone)]
pub struct ChirpSubspace {
    basis: Mat<C64>,
    interval: GammaInterval,
    spacing: f64,
    worst_case_error: f64,
}

/// Validation grid density relative to the construction grid.
const VALIDATION_OVERSAMPLING: usize = 8;

impl ChirpSubspace {
    /// `n_x x j_x` basis with orthonormal columns.
    pub fn basis(&self) -> &Mat<C64> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn interval(&self) -> GammaInterval {
        self.interval
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Largest relative projection residual observed on the validation grid.
    pub fn worst_case_error(&self) -> f64 {
        self.worst_case_error
    }

    /// Least-squares coefficients `B^H q` of a vector in this basis.
    pub fn coefficients(&self, q: &Col<C64>) -> Col<C64> {
        self.basis.adjoint() * q
    }

    /// Coefficients of the chirp at rate `gamma`.
    pub fn chirp_coefficients(&self, gamma: f64) -> Col<C64> {
        self.coefficients(&chirp(self.n(), self.spacing * self.spacing * gamma))
    }

    pub fn reconstruct(&self, u: &Col<C64>) -> Col<C64> {
        &self.basis * u
    }

    /// Relative residual `||q - B B^H q|| / ||q||`.
    pub fn relative_error(&self, q: &Col<C64>) -> f64 {
        let proj = self.reconstruct(&self.coefficients(q));
        (q - &proj).norm_l2() / q.norm_l2()
    }
}

/// Builds a chirp subspace from the `j_x` leading left singular vectors of
/// `grid_size` chirps sampled uniformly in `gamma`.
pub fn build_subspace(
    n_x: usize,
    d_x: f64,
    interval: GammaInterval,
    j_x: usize,
    grid_size: usize,
) -> Result<ChirpSubspace> {
    if j_x == 0 || j_x > n_x {
        return Err(Error::InvalidParameter(format!("subspace dimension {j_x} not in 1..={n_x}")));
    }
    if grid_size == 0 {
        return Err(Error::InvalidParameter("grid_size must be positive".into()));
    }
    // a degenerate interval only ever needs one sample
    let count = if interval.max > interval.min { grid_size } else { 1 };
    let gammas: Vec<f64> = interval.samples(count).collect();
    let ensemble = Mat::from_fn(n_x, gammas.len(), |i, j| chirp(n_x, d_x * d_x * gammas[j])[i]);

    let basis = if j_x == n_x {
        Mat::<C64>::identity(n_x, n_x)
    } else {
        let svd = ensemble
            .thin_svd()
            .map_err(|e| Error::Numerical(format!("chirp ensemble SVD: {e:?}")))?;
        let u = svd.U();
        if u.ncols() < j_x {
            return Err(Error::InvalidParameter(format!(
                "subspace dimension {j_x} exceeds ensemble rank bound {}",
                u.ncols()
            )));
        }
        u.subcols(0, j_x).to_owned()
    };

    let mut sub = ChirpSubspace {
        basis,
        interval,
        spacing: d_x,
        worst_case_error: 0.0,
    };
    let validation = if count > 1 { count * VALIDATION_OVERSAMPLING } else { 1 };
    sub.worst_case_error = interval
        .samples(validation)
        .map(|g| sub.relative_error(&chirp(n_x, d_x * d_x * g)))
        .fold(0.0, f64::max);
    Ok(sub)
}

/// The linear map `P: C^{(J_H J_V) x N} -> C^N`,
/// `[P(Z)]_n = (B_H[n_h, :] (x) B_V[n_v, :]) Z[:, n]`.
#[derive(Debug, Clone)]
pub struct LiftingOperator {
    sub_h: ChirpSubspace,
    sub_v: ChirpSubspace,
    geom: UpaGeometry,
    /// Row `n` holds `B_H[n_h, :] (x) B_V[n_v, :]`.
    weights: Mat<C64>,
}

impl LiftingOperator {
    pub fn new(sub_h: ChirpSubspace, sub_v: ChirpSubspace, geom: UpaGeometry) -> Result<Self> {
        if sub_h.n() != geom.n_h() || sub_v.n() != geom.n_v() {
            return Err(Error::dims(
                format!("{}x{} subspace rows", geom.n_h(), geom.n_v()),
                format!("{}x{}", sub_h.n(), sub_v.n()),
            ));
        }
        let (jh, jv) = (sub_h.dim(), sub_v.dim());
        let bh = sub_h.basis();
        let bv = sub_v.basis();
        let nv = geom.n_v();
        let weights = Mat::from_fn(geom.n_elements(), jh * jv, |n, c| {
            bh[(n / nv, c / jv)] * bv[(n % nv, c % jv)]
        });
        Ok(Self {
            sub_h,
            sub_v,
            geom,
            weights,
        })
    }

    pub fn sub_h(&self) -> &ChirpSubspace {
        &self.sub_h
    }

    pub fn sub_v(&self) -> &ChirpSubspace {
        &self.sub_v
    }

    pub fn geometry(&self) -> &UpaGeometry {
        &self.geom
    }

    /// `J_H * J_V`.
    pub fn coeff_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_elements(&self) -> usize {
        self.weights.nrows()
    }

    /// Per-element Kronecker weights, `N x (J_H J_V)`.
    pub fn weights(&self) -> &Mat<C64> {
        &self.weights
    }

    fn check(&self, z: &Mat<C64>) -> Result<()> {
        if z.nrows() != self.coeff_dim() || z.ncols() != self.n_elements() {
            return Err(Error::dims(
                format!("{}x{}", self.coeff_dim(), self.n_elements()),
                format!("{}x{}", z.nrows(), z.ncols()),
            ));
        }
        Ok(())
    }

    pub fn apply(&self, z: &Mat<C64>) -> Result<Col<C64>> {
        self.check(z)?;
        Ok(self.apply_unchecked(z))
    }

    pub(crate) fn apply_unchecked(&self, z: &Mat<C64>) -> Col<C64> {
        let w = &self.weights;
        Col::from_fn(self.n_elements(), |n| {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..w.ncols() {
                acc += w[(n, c)] * z[(c, n)];
            }
            acc
        })
    }

    /// `P*(v) = sum_n v_n (b_H (x) b_V) e_n^H`, so column `n` is
    /// `v_n conj(weights[n, :])`.
    pub fn adjoint(&self, v: &Col<C64>) -> Result<Mat<C64>> {
        if v.nrows() != self.n_elements() {
            return Err(Error::dims(self.n_elements(), v.nrows()));
        }
        Ok(self.adjoint_unchecked(v))
    }

    pub(crate) fn adjoint_unchecked(&self, v: &Col<C64>) -> Mat<C64> {
        let w = &self.weights;
        Mat::from_fn(self.coeff_dim(), self.n_elements(), |c, n| w[(n, c)].conj() * v[n])
    }

    /// Lifted single-user matrix `(u_H (x) u_V) (a_H(alpha) (x) a_V(beta))^T`.
    pub fn rank_one(&self, u_h: &Col<C64>, u_v: &Col<C64>, alpha: f64, beta: f64) -> Mat<C64> {
        let u = crate::geometry::kron(u_h, u_v);
        let d = crate::geometry::steering_2d(&self.geom, alpha, beta);
        Mat::from_fn(u.nrows(), d.nrows(), |i, j| u[i] * d[j])
    }
}

/// Builds both axis subspaces and the lifting operator for a geometry and
/// a range interval.
pub fn lifting_for_ranges(
    geom: &UpaGeometry,
    r_min: f64,
    r_max: f64,
    guard: f64,
    j_h: usize,
    j_v: usize,
    grid_size: usize,
) -> Result<LiftingOperator> {
    let interval = GammaInterval::from_ranges(r_min, r_max, geom.wavelength(), guard)?;
    let sub_h = build_subspace(geom.n_h(), geom.d_h(), interval, j_h, grid_size)?;
    let sub_v = build_subspace(geom.n_v(), geom.d_v(), interval, j_v, grid_size)?;
    LiftingOperator::new(sub_h, sub_v, *geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fresnel_response, SpatialFreqs};
    use crate::testutil::{random_col, random_mat, rng};

    fn paper_interval() -> GammaInterval {
        GammaInterval::from_ranges(3.0, 15.0, 0.3, 0.1).unwrap()
    }

    fn assert_orthonormal(b: &Mat<C64>) {
        let g = b.adjoint() * b;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                let e = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                assert!((g[(i, j)] - e).norm() < 1e-12, "gram[{i},{j}] = {}", g[(i, j)]);
            }
        }
    }

    #[test]
    fn guard_band_widens_interval() {
        let raw = GammaInterval::from_ranges(3.0, 15.0, 0.3, 0.0).unwrap();
        let g = paper_interval();
        let w = raw.max - raw.min;
        assert!((g.min - (raw.min - 0.1 * w)).abs() < 1e-12);
        assert!((g.max - (raw.max + 0.1 * w)).abs() < 1e-12);
        assert!(g.contains(std::f64::consts::PI / 0.9));
    }

    #[test]
    fn full_basis_is_exact() {
        let s = build_subspace(15, 0.15, paper_interval(), 15, 64).unwrap();
        assert_orthonormal(s.basis());
        assert!(s.worst_case_error() <= 1e-12);
    }

    #[test]
    fn single_point_interval() {
        let iv = GammaInterval::new(1.2, 1.2).unwrap();
        let s = build_subspace(15, 0.15, iv, 1, 64).unwrap();
        assert!(s.worst_case_error() <= 1e-12);
        let q = chirp(15, 0.0225 * 1.2);
        let b = s.basis();
        // column equals the normalized chirp up to a global phase
        let ip: C64 = (0..15).map(|i| b[(i, 0)].conj() * q[i]).sum();
        assert!((ip.norm() - q.norm_l2()).abs() < 1e-12);
    }

    #[test]
    fn error_decreases_with_dimension() {
        let mut prev = f64::INFINITY;
        for j in 1..=5 {
            let s = build_subspace(15, 0.15, paper_interval(), j, 64).unwrap();
            assert_orthonormal(s.basis());
            assert!(s.worst_case_error() < prev);
            prev = s.worst_case_error();
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(build_subspace(15, 0.15, paper_interval(), 0, 64).is_err());
        assert!(build_subspace(15, 0.15, paper_interval(), 16, 64).is_err());
        assert!(GammaInterval::new(2.0, 1.0).is_err());
    }

    fn operator() -> LiftingOperator {
        let g = UpaGeometry::half_wavelength(15, 0.3).unwrap();
        lifting_for_ranges(&g, 3.0, 15.0, 0.1, 3, 3, 64).unwrap()
    }

    /// Direct evaluation of `<Z, b_H e_H^H (x) b_V e_V^H>` with the full
    /// Kronecker product materialized.
    fn apply_brute(op: &LiftingOperator, z: &Mat<C64>) -> Col<C64> {
        let g = op.geometry();
        let (bh, bv) = (op.sub_h().basis(), op.sub_v().basis());
        let (jh, jv) = (bh.ncols(), bv.ncols());
        Col::from_fn(g.n_elements(), |n| {
            let (ih, iv) = (n / g.n_v(), n % g.n_v());
            let left = Mat::from_fn(jh, g.n_h(), |a, b| if b == ih { bh[(ih, a)].conj() } else { C64::new(0.0, 0.0) });
            let right = Mat::from_fn(jv, g.n_v(), |a, b| if b == iv { bv[(iv, a)].conj() } else { C64::new(0.0, 0.0) });
            let w = Mat::from_fn(jh * jv, g.n_elements(), |r, c| {
                left[(r / jv, c / g.n_v())] * right[(r % jv, c % g.n_v())]
            });
            // trace(W^H Z)
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..w.nrows() {
                for c in 0..w.ncols() {
                    acc += w[(r, c)].conj() * z[(r, c)];
                }
            }
            acc
        })
    }

    #[test]
    fn apply_matches_definition() {
        let op = operator();
        let mut r = rng(11);
        for _ in 0..3 {
            let z = random_mat(&mut r, 9, 225);
            let fast = op.apply(&z).unwrap();
            let slow = apply_brute(&op, &z);
            assert!((&fast - &slow).norm_l2() <= 1e-12 * slow.norm_l2());
        }
    }

    #[test]
    fn zero_inputs() {
        let op = operator();
        assert_eq!(op.apply(&Mat::zeros(9, 225)).unwrap().norm_l2(), 0.0);
        assert_eq!(op.adjoint(&Col::zeros(225)).unwrap().norm_l2(), 0.0);
    }

    #[test]
    fn adjoint_identity() {
        let op = operator();
        let mut r = rng(5);
        for _ in 0..100 {
            let z = random_mat(&mut r, 9, 225);
            let v = random_col(&mut r, 225);
            let lhs = crate::linalg::inner(&op.apply(&z).unwrap(), &v);
            let rhs = crate::linalg::frob_inner(&z, &op.adjoint(&v).unwrap());
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
        }
    }

    #[test]
    fn adjoint_of_canonical_vector() {
        let op = operator();
        let n = 37;
        let mut v = Col::<C64>::zeros(225);
        v[n] = C64::new(1.0, 0.0);
        let m = op.adjoint(&v).unwrap();
        let g = op.geometry();
        let bh = op.sub_h().basis();
        let bv = op.sub_v().basis();
        let (ih, iv) = (n / g.n_v(), n % g.n_v());
        for c in 0..225 {
            for r in 0..9 {
                let expect = if c == n {
                    (bh[(ih, r / 3)] * bv[(iv, r % 3)]).conj()
                } else {
                    C64::new(0.0, 0.0)
                };
                assert!((m[(r, c)] - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn lifted_rank_one_approximates_fresnel_response() {
        let op = operator();
        let g = *op.geometry();
        for (alpha, beta, r) in [(0.4, -0.3, 3.0), (-1.2, 0.8, 7.5), (2.0, 0.1, 15.0)] {
            let gamma = std::f64::consts::PI / (0.3 * r);
            let uh = op.sub_h().chirp_coefficients(gamma);
            let uv = op.sub_v().chirp_coefficients(gamma);
            let z = op.rank_one(&uh, &uv, alpha, beta);
            let b = fresnel_response(&SpatialFreqs { alpha, beta, gamma }, &g);
            let err = (&op.apply(&z).unwrap() - &b).norm_l2() / (g.n_elements() as f64).sqrt();
            let eh = op.sub_h().worst_case_error();
            let ev = op.sub_v().worst_case_error();
            // ||q_H (x) q_V - p_H (x) p_V|| <= (e_H + e_V + e_H e_V) ||q_H|| ||q_V||
            assert!(err <= eh + ev + eh * ev, "err {err}");
        }
    }
}
