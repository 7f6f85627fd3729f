//! Random scenes and per-trial seed derivation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use risloc::geometry::{spatial_freqs_from_ue, UeGroundTruth, UpaGeometry};
use risloc::C64;

use crate::config::SceneConfig;
use crate::HarnessError;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` with `k` users. It does not depend on the SNR, so
/// an SNR sweep reuses the same scenes and unit noise draws.
pub fn trial_seed(base: u64, k: usize, trial: usize) -> u64 {
    mix(mix(mix(base) ^ k as u64) ^ trial as u64)
}

/// Independent stream `stream` derived from a trial seed.
pub fn substream(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream.wrapping_add(1)))
}

/// Free-space amplitude `lambda / (4 pi r)`.
pub fn free_space_amplitude(range: f64, wavelength: f64) -> f64 {
    wavelength / (4.0 * PI * range)
}

pub fn well_separated(scene: &[UeGroundTruth], geom: &UpaGeometry) -> bool {
    let min_a = PI / geom.n_h() as f64;
    let min_b = PI / geom.n_v() as f64;
    let f: Vec<_> = scene.iter().map(|u| spatial_freqs_from_ue(u, geom)).collect();
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            if (f[i].alpha - f[j].alpha).abs() < min_a || (f[i].beta - f[j].beta).abs() < min_b {
                return false;
            }
        }
    }
    true
}

/// Draws `k` users uniformly in angle and range with free-space gains of
/// uniformly random phase.
pub fn sample_scene(cfg: &SceneConfig, geom: &UpaGeometry, k: usize, seed: u64) -> Result<Vec<UeGroundTruth>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = if cfg.enforce_separation { cfg.max_redraws.max(1) } else { 1 };
    for _ in 0..draws {
        let scene: Vec<UeGroundTruth> = (0..k)
            .map(|_| {
                let az = rng.random_range(cfg.azimuth[0]..cfg.azimuth[1]);
                let el = rng.random_range(cfg.elevation[0]..cfg.elevation[1]);
                let r = rng.random_range(cfg.range[0]..cfg.range[1]);
                let phase = rng.random_range(0.0..2.0 * PI);
                UeGroundTruth::new(az, el, r)
                    .with_gain(C64::from_polar(free_space_amplitude(r, geom.wavelength()), phase))
                    .with_power(cfg.power)
            })
            .collect();
        if !cfg.enforce_separation || well_separated(&scene, geom) {
            return Ok(scene);
        }
    }
    Err(HarnessError::Config(format!(
        "no separated {k}-user scene after {} draws",
        cfg.max_redraws
    )))
}
