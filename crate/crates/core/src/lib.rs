//! Gridless near-field localization for RIS-assisted uplinks.
//!
//! Under the Fresnel approximation the response of a planar RIS to a user at
//! `(azimuth, elevation, range)` factors into a 2D far-field steering vector
//! and a range-dependent quadratic-phase chirp on each axis. Modelling the
//! chirps in low-dimensional subspaces turns localization into a 2D
//! multiple-measurement line-spectral problem, which is solved with a
//! two-fold Toeplitz atomic-norm SDP ([`anm`]). Angles come from a matrix
//! pencil on the recovered Toeplitz matrix ([`mapp`]) and ranges from the
//! chirp coefficients ([`recovery`]).
//!
//! [`baselines`] holds the OMP and RIS-side 3D-MUSIC comparison methods and
//! [`metrics`] the estimate-to-truth matching used for error statistics.

pub mod anm;
pub mod baselines;
pub mod channel;
pub mod chirp;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mapp;
pub mod metrics;
pub mod recovery;
pub mod toeplitz;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
