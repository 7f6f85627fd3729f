//! RIS panel geometry, user parameters and the two RIS response models.
//!
//! The panel is a uniform planar array on the YZ-plane centred at the origin.
//! Element `(n_h, n_v)` sits at `(0, n_h d_h, n_v d_v)` with both indices
//! symmetric around zero, and elements are stored horizontal-major: the flat
//! index is `(n_h + (N_H-1)/2) * N_V + (n_v + (N_V-1)/2)`.

use std::f64::consts::PI;

use faer::Col;

use crate::error::{Error, Result};
use crate::C64;

/// Uniform planar RIS geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaGeometry {
    n_h: usize,
    n_v: usize,
    d_h: f64,
    d_v: f64,
    wavelength: f64,
}

impl UpaGeometry {
    pub fn new(n_h: usize, n_v: usize, d_h: f64, d_v: f64, wavelength: f64) -> Result<Self> {
        if n_h == 0 || n_v == 0 || n_h % 2 == 0 || n_v % 2 == 0 {
            return Err(Error::InvalidGeometry(format!(
                "element counts must be odd and positive, got {n_h}x{n_v}"
            )));
        }
        for (name, v) in [("d_h", d_h), ("d_v", d_v), ("wavelength", wavelength)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            n_h,
            n_v,
            d_h,
            d_v,
            wavelength,
        })
    }

    /// Square panel with half-wavelength spacing.
    pub fn half_wavelength(n_side: usize, wavelength: f64) -> Result<Self> {
        Self::new(n_side, n_side, wavelength / 2.0, wavelength / 2.0, wavelength)
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn d_h(&self) -> f64 {
        self.d_h
    }

    pub fn d_v(&self) -> f64 {
        self.d_v
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Total element count `N = N_H * N_V`.
    pub fn n_elements(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn half_h(&self) -> i64 {
        (self.n_h as i64 - 1) / 2
    }

    pub fn half_v(&self) -> i64 {
        (self.n_v as i64 - 1) / 2
    }

    /// Flat (zero-based) element index of the signed pair `(n_h, n_v)`.
    pub fn flat_index(&self, n_h: i64, n_v: i64) -> Option<usize> {
        let (hh, hv) = (self.half_h(), self.half_v());
        if n_h.abs() > hh || n_v.abs() > hv {
            return None;
        }
        Some(((n_h + hh) as usize) * self.n_v + (n_v + hv) as usize)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn signed_index(&self, flat: usize) -> Option<(i64, i64)> {
        if flat >= self.n_elements() {
            return None;
        }
        let ih = (flat / self.n_v) as i64;
        let iv = (flat % self.n_v) as i64;
        Some((ih - self.half_h(), iv - self.half_v()))
    }

    /// Signed indices of every element in flat order.
    pub fn indices(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        (0..self.n_elements()).map(|n| self.signed_index(n).unwrap())
    }

    /// Position of element `flat` in metres.
    pub fn element_position(&self, flat: usize) -> [f64; 3] {
        let (nh, nv) = self.signed_index(flat).expect("element index out of range");
        [0.0, nh as f64 * self.d_h, nv as f64 * self.d_v]
    }

    pub fn element_positions(&self) -> Vec<[f64; 3]> {
        (0..self.n_elements()).map(|n| self.element_position(n)).collect()
    }
}

/// Ground-truth parameters of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UeGroundTruth {
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
    pub path_gain: C64,
    pub power: f64,
}

impl UeGroundTruth {
    pub fn new(azimuth: f64, elevation: f64, range: f64) -> Self {
        Self {
            azimuth,
            elevation,
            range,
            path_gain: C64::new(1.0, 0.0),
            power: 1.0,
        }
    }

    pub fn with_gain(mut self, path_gain: C64) -> Self {
        self.path_gain = path_gain;
        self
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.power = power;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let half = PI / 2.0;
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(Error::InvalidParameter(format!("range must be positive, got {}", self.range)));
        }
        if !(self.azimuth.abs() < half && self.elevation.abs() < half) {
            return Err(Error::InvalidParameter(format!(
                "angles must lie in (-pi/2, pi/2), got ({}, {})",
                self.azimuth, self.elevation
            )));
        }
        if !(self.power.is_finite() && self.power >= 0.0) {
            return Err(Error::InvalidParameter(format!("power must be non-negative, got {}", self.power)));
        }
        Ok(())
    }

    /// Effective gain `sqrt(p) * eta`.
    pub fn effective_gain(&self) -> C64 {
        self.path_gain * self.power.sqrt()
    }

    pub fn position(&self) -> [f64; 3] {
        spherical_to_cartesian(self.azimuth, self.elevation, self.range)
    }
}

/// `r (cos psi cos theta, sin psi cos theta, sin theta)`.
pub fn spherical_to_cartesian(azimuth: f64, elevation: f64, range: f64) -> [f64; 3] {
    let (sp, cp) = azimuth.sin_cos();
    let (st, ct) = elevation.sin_cos();
    [range * cp * ct, range * sp * ct, range * st]
}

/// Spatial frequencies of one user: linear phases `alpha`, `beta` and the
/// chirp rate `gamma = pi / (lambda r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialFreqs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

pub fn spatial_freqs_from_ue(ue: &UeGroundTruth, geom: &UpaGeometry) -> SpatialFreqs {
    let k = geom.wavenumber();
    SpatialFreqs {
        alpha: k * geom.d_h() * ue.azimuth.sin() * ue.elevation.cos(),
        beta: k * geom.d_v() * ue.elevation.sin(),
        gamma: PI / (geom.wavelength() * ue.range),
    }
}

/// Returns `(azimuth, elevation, range)`.
pub fn ue_from_spatial_freqs(freqs: &SpatialFreqs, geom: &UpaGeometry) -> Result<(f64, f64, f64)> {
    let k = geom.wavenumber();
    let sin_el = freqs.beta / (k * geom.d_v());
    if sin_el.abs() > 1.0 {
        return Err(Error::OutOfDomain { what: "elevation", value: sin_el });
    }
    let el = sin_el.asin();
    let sin_az = freqs.alpha / (k * geom.d_h() * el.cos());
    if !(sin_az.abs() <= 1.0) {
        return Err(Error::OutOfDomain { what: "azimuth", value: sin_az });
    }
    if !(freqs.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", freqs.gamma)));
    }
    Ok((sin_az.asin(), el, PI / (geom.wavelength() * freqs.gamma)))
}

/// Spherical-wave response `exp{j k (r - r_n)}` with exact element distances.
pub fn exact_response(ue: &UeGroundTruth, geom: &UpaGeometry) -> Col<C64> {
    exact_response_at(ue.azimuth, ue.elevation, ue.range, geom)
}

pub fn exact_response_at(azimuth: f64, elevation: f64, range: f64, geom: &UpaGeometry) -> Col<C64> {
    let p = spherical_to_cartesian(azimuth, elevation, range);
    let k = geom.wavenumber();
    Col::from_fn(geom.n_elements(), |n| {
        let e = geom.element_position(n);
        let dist = ((p[0] - e[0]).powi(2) + (p[1] - e[1]).powi(2) + (p[2] - e[2]).powi(2)).sqrt();
        C64::from_polar(1.0, k * (range - dist))
    })
}

/// Far-field steering vector `[e^{j n alpha}]` over the symmetric index set.
pub fn steering(n: usize, alpha: f64) -> Col<C64> {
    let half = (n as i64 - 1) / 2;
    Col::from_fn(n, |i| C64::from_polar(1.0, (i as i64 - half) as f64 * alpha))
}

/// Quadratic-phase chirp `[e^{-j n^2 delta}]` over the symmetric index set.
pub fn chirp(n: usize, delta: f64) -> Col<C64> {
    let half = (n as i64 - 1) / 2;
    Col::from_fn(n, |i| {
        let m = (i as i64 - half) as f64;
        C64::from_polar(1.0, -m * m * delta)
    })
}

/// Fresnel-approximated response
/// `(a_H(alpha) . q_H(d_h^2 gamma)) (x) (a_V(beta) . q_V(d_v^2 gamma))`.
pub fn fresnel_response(freqs: &SpatialFreqs, geom: &UpaGeometry) -> Col<C64> {
    let h = hadamard(&steering(geom.n_h(), freqs.alpha), &chirp(geom.n_h(), geom.d_h().powi(2) * freqs.gamma));
    let v = hadamard(&steering(geom.n_v(), freqs.beta), &chirp(geom.n_v(), geom.d_v().powi(2) * freqs.gamma));
    kron(&h, &v)
}

/// 2D far-field atom `a_H(alpha) (x) a_V(beta)`.
pub fn steering_2d(geom: &UpaGeometry, alpha: f64, beta: f64) -> Col<C64> {
    kron(&steering(geom.n_h(), alpha), &steering(geom.n_v(), beta))
}

pub(crate) fn hadamard(a: &Col<C64>, b: &Col<C64>) -> Col<C64> {
    Col::from_fn(a.nrows(), |i| a[i] * b[i])
}

pub fn kron(a: &Col<C64>, b: &Col<C64>) -> Col<C64> {
    let nb = b.nrows();
    Col::from_fn(a.nrows() * nb, |i| a[i / nb] * b[i % nb])
}
