//! Small dense linear-algebra helpers on top of faer.

use faer::{Col, Mat, Side};

use crate::error::{Error, Result};
use crate::C64;

/// `<a, b> = b^H a`.
pub fn inner(a: &Col<C64>, b: &Col<C64>) -> C64 {
    (0..a.nrows()).map(|i| b[i].conj() * a[i]).sum()
}

/// Frobenius pairing `<A, B> = trace(B^H A)`.
pub fn frob_inner(a: &Mat<C64>, b: &Mat<C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += b[(i, j)].conj() * a[(i, j)];
        }
    }
    acc
}

/// Hermitian eigendecomposition with eigenvalues in nonincreasing order.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<C64>,
}

pub fn hermitian_eigen(a: &Mat<C64>) -> Result<HermitianEigen> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigendecomposition: {e:?}")))?;
    let n = a.nrows();
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer returns nondecreasing order
    let values = (0..n).rev().map(|i| s[i].re).collect();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok(HermitianEigen { values, vectors })
}

/// Solves the Hermitian positive-definite system `A x = b` for every column
/// of `b` by Cholesky factorization.
pub fn solve_hpd(a: &Mat<C64>, b: &Mat<C64>) -> Result<Mat<C64>> {
    use faer::linalg::solvers::Solve;
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("cholesky: {e:?}")))?;
    Ok(llt.solve(b))
}

/// Solves a general square system by LU with partial pivoting.
pub fn solve(a: &Mat<C64>, b: &Mat<C64>) -> Mat<C64> {
    use faer::linalg::solvers::Solve;
    a.partial_piv_lu().solve(b)
}

/// Least-squares solution of `A x = b` through the normal equations,
/// together with the 2-norm condition number of `A^H A`.
pub fn least_squares(a: &Mat<C64>, b: &Col<C64>) -> Result<(Col<C64>, f64)> {
    let gram = a.adjoint() * a;
    let cond = hermitian_condition(&gram)?;
    let rhs = a.adjoint() * b;
    let rhs = Mat::from_fn(rhs.nrows(), 1, |i, _| rhs[i]);
    let x = solve(&gram, &rhs);
    Ok((Col::from_fn(x.nrows(), |i| x[(i, 0)]), cond))
}

pub fn hermitian_condition(a: &Mat<C64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(1.0);
    }
    let e = hermitian_eigen(a)?;
    let max = e.values[0];
    let min = *e.values.last().unwrap();
    Ok(if min <= 0.0 { f64::INFINITY } else { max / min })
}

pub fn col_to_mat(c: &Col<C64>) -> Mat<C64> {
    Mat::from_fn(c.nrows(), 1, |i, _| c[i])
}

pub fn mat_col(m: &Mat<C64>, j: usize) -> Col<C64> {
    Col::from_fn(m.nrows(), |i| m[(i, j)])
}

/// Makes a square matrix exactly Hermitian by averaging with its adjoint.
pub fn hermitian_part(a: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}
