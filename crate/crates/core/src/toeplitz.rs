//! Two-fold (block Toeplitz with Toeplitz blocks) matrices.

use faer::Mat;

use crate::error::{Error, Result};
use crate::C64;

/// Coefficients `T[l, m]` for level lag `l` in `-(N_H-1)..=N_H-1` and inner
/// lag `m` in `-(N_V-1)..=N_V-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Toep2Coeffs {
    n_h: usize,
    n_v: usize,
    data: Mat<C64>,
}

impl Toep2Coeffs {
    pub fn zeros(n_h: usize, n_v: usize) -> Self {
        Self {
            n_h,
            n_v,
            data: Mat::zeros(2 * n_h - 1, 2 * n_v - 1),
        }
    }

    pub fn from_fn(n_h: usize, n_v: usize, f: impl Fn(i64, i64) -> C64) -> Self {
        let (oh, ov) = (n_h as i64 - 1, n_v as i64 - 1);
        Self {
            n_h,
            n_v,
            data: Mat::from_fn(2 * n_h - 1, 2 * n_v - 1, |i, j| f(i as i64 - oh, j as i64 - ov)),
        }
    }

    /// Coefficients of `sum_k c_k d(alpha_k, beta_k) d(alpha_k, beta_k)^H`.
    pub fn from_atoms(n_h: usize, n_v: usize, atoms: &[(f64, f64, f64)]) -> Self {
        Self::from_fn(n_h, n_v, |l, m| {
            atoms
                .iter()
                .map(|&(a, b, c)| C64::from_polar(c, l as f64 * a + m as f64 * b))
                .sum()
        })
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn get(&self, l: i64, m: i64) -> C64 {
        self.data[((l + self.n_h as i64 - 1) as usize, (m + self.n_v as i64 - 1) as usize)]
    }

    pub fn set(&mut self, l: i64, m: i64, v: C64) {
        let (i, j) = ((l + self.n_h as i64 - 1) as usize, (m + self.n_v as i64 - 1) as usize);
        self.data[(i, j)] = v;
    }

    pub fn lags(&self) -> impl Iterator<Item = (i64, i64)> {
        let (lh, lv) = (self.n_h as i64 - 1, self.n_v as i64 - 1);
        (-lh..=lh).flat_map(move |l| (-lv..=lv).map(move |m| (l, m)))
    }

    /// Number of matrix entries that share lag `(l, m)`.
    pub fn multiplicity(&self, l: i64, m: i64) -> f64 {
        ((self.n_h as i64 - l.abs()) * (self.n_v as i64 - m.abs())) as f64
    }

    pub fn center(&self) -> C64 {
        self.get(0, 0)
    }

    /// Largest deviation from `T[-l, -m] = conj(T[l, m])`.
    pub fn hermitian_defect(&self) -> f64 {
        self.lags()
            .map(|(l, m)| (self.get(-l, -m) - self.get(l, m).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Replaces `T` by the average of `T[l, m]` and `conj(T[-l, -m])`.
    pub fn symmetrize(&mut self) {
        let src = self.clone();
        for (l, m) in src.lags() {
            self.set(l, m, (src.get(l, m) + src.get(-l, -m).conj()) * 0.5);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for j in 0..self.data.ncols() {
            for i in 0..self.data.nrows() {
                self.data[(i, j)] *= s;
            }
        }
    }

    /// Frobenius pairing over the coefficient array, `sum conj(other) self`.
    pub fn inner(&self, other: &Toep2Coeffs) -> C64 {
        crate::linalg::frob_inner(&self.data, &other.data)
    }

    pub fn as_mat(&self) -> &Mat<C64> {
        &self.data
    }
}

/// Expands coefficients into the `N x N` matrix with outer blocks `T_{i-j}`
/// and `T_l[a, b] = T[l, a - b]`.
pub fn toep2(t: &Toep2Coeffs) -> Mat<C64> {
    let (nh, nv) = (t.n_h, t.n_v);
    Mat::from_fn(nh * nv, nh * nv, |r, c| {
        let l = (r / nv) as i64 - (c / nv) as i64;
        let m = (r % nv) as i64 - (c % nv) as i64;
        t.get(l, m)
    })
}

/// Adjoint of [`toep2`]: sums the entries of `m` that share each lag.
pub fn toep2_adjoint(m: &Mat<C64>, n_h: usize, n_v: usize) -> Result<Toep2Coeffs> {
    let n = n_h * n_v;
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dims(format!("{n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())));
    }
    let mut t = Toep2Coeffs::zeros(n_h, n_v);
    let (oh, ov) = (n_h - 1, n_v - 1);
    for c in 0..n {
        let (ch, cv) = (c / n_v, c % n_v);
        for r in 0..n {
            let (rh, rv) = (r / n_v, r % n_v);
            t.data[(rh + oh - ch, rv + ov - cv)] += m[(r, c)];
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{steering_2d, UpaGeometry};
    use crate::linalg::frob_inner;
    use crate::testutil::{random_hermitian_toep, random_mat, rng};

    #[test]
    fn delta_coefficients_give_scaled_identity() {
        let mut t = Toep2Coeffs::zeros(3, 5);
        t.set(0, 0, C64::new(2.5, 0.0));
        let m = toep2(&t);
        for i in 0..15 {
            for j in 0..15 {
                let e = if i == j { 2.5 } else { 0.0 };
                assert_eq!(m[(i, j)], C64::new(e, 0.0));
            }
        }
    }

    #[test]
    fn diagonal_is_center_lag() {
        let t = random_hermitian_toep(&mut rng(1), 5, 3);
        let m = toep2(&t);
        for n in 0..15 {
            assert_eq!(m[(n, n)], t.center());
        }
    }

    #[test]
    fn hermitian_symmetric_coefficients_give_hermitian_matrix() {
        let t = random_hermitian_toep(&mut rng(2), 5, 7);
        assert!(t.hermitian_defect() < 1e-15);
        let m = toep2(&t);
        for i in 0..35 {
            for j in 0..35 {
                assert!((m[(i, j)] - m[(j, i)].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn atoms_match_outer_products() {
        let g = UpaGeometry::new(5, 7, 0.15, 0.15, 0.3).unwrap();
        let atoms = [(0.3, -1.2, 2.0), (-2.1, 0.7, 0.5), (1.4, 2.9, 1.3)];
        let t = Toep2Coeffs::from_atoms(5, 7, &atoms);
        let lhs = toep2(&t);
        let mut rhs = Mat::<C64>::zeros(35, 35);
        for &(a, b, c) in &atoms {
            let d = steering_2d(&g, a, b);
            rhs += Mat::from_fn(35, 35, |i, j| d[i] * d[j].conj() * c);
        }
        let diff = (&lhs - &rhs).norm_l2();
        assert!(diff <= 1e-10 * rhs.norm_l2());
    }

    #[test]
    fn adjoint_of_identity() {
        let t = toep2_adjoint(&Mat::identity(15, 15), 3, 5).unwrap();
        for (l, m) in t.lags() {
            let e = if (l, m) == (0, 0) { 15.0 } else { 0.0 };
            assert_eq!(t.get(l, m), C64::new(e, 0.0));
        }
    }

    #[test]
    fn adjoint_identity_random() {
        let mut r = rng(3);
        for _ in 0..100 {
            let t = random_hermitian_toep(&mut r, 15, 15);
            let m = random_mat(&mut r, 225, 225);
            let lhs = frob_inner(&toep2(&t), &m);
            let rhs = t.inner(&toep2_adjoint(&m, 15, 15).unwrap());
            assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm());
        }
    }

    #[test]
    fn adjoint_of_expansion_counts_multiplicities() {
        let t0 = random_hermitian_toep(&mut rng(4), 5, 3);
        let back = toep2_adjoint(&toep2(&t0), 5, 3).unwrap();
        for (l, m) in t0.lags() {
            let expect = t0.get(l, m) * t0.multiplicity(l, m);
            assert!((back.get(l, m) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn adjoint_rejects_wrong_shape() {
        assert!(toep2_adjoint(&Mat::zeros(4, 4), 3, 3).is_err());
    }
}
