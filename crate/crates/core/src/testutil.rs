//! Random fixtures shared by unit tests.

use faer::{Col, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::toeplitz::Toep2Coeffs;
use crate::C64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng) -> C64 {
    C64::new(r.sample(StandardNormal), r.sample(StandardNormal))
}

pub fn random_mat(r: &mut ChaCha8Rng, m: usize, n: usize) -> Mat<C64> {
    Mat::from_fn(m, n, |_, _| gaussian(r))
}

pub fn random_col(r: &mut ChaCha8Rng, n: usize) -> Col<C64> {
    Col::from_fn(n, |_| gaussian(r))
}

pub fn random_hermitian_toep(r: &mut ChaCha8Rng, n_h: usize, n_v: usize) -> Toep2Coeffs {
    let raw = Toep2Coeffs::from_fn(n_h, n_v, |_, _| C64::new(0.0, 0.0));
    let mut t = raw;
    let lags: Vec<_> = t.lags().collect();
    for (l, m) in lags {
        t.set(l, m, gaussian(r));
    }
    t.symmetrize();
    t
}
