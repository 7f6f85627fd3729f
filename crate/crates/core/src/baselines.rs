//! Comparison methods: OMP over a polar-domain Fresnel dictionary, and
//! 3D-MUSIC with direct access to RIS-side snapshots.

use std::f64::consts::PI;

use faer::{Col, Mat};

use crate::channel::{response, ResponseModel};
use crate::error::{Error, Result};
use crate::geometry::{fresnel_response, SpatialFreqs, UeGroundTruth, UpaGeometry};
use crate::linalg::{hermitian_eigen, least_squares};
use crate::recovery::{angles_from_pair, UeEstimate, MAX_GRAM_CONDITION};
use crate::C64;

/// Search grid over azimuth, elevation and range. Angles are uniform in
/// their sines, ranges uniform in `1/r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarGrid {
    pub n_azimuth: usize,
    pub n_elevation: usize,
    pub n_range: usize,
    pub azimuth: (f64, f64),
    pub elevation: (f64, f64),
    pub range: (f64, f64),
}

impl PolarGrid {
    /// `2 N_H x 2 N_V` angle points and 32 range rings over the scene bounds.
    pub fn for_geometry(geom: &UpaGeometry) -> Self {
        Self {
            n_azimuth: 2 * geom.n_h(),
            n_elevation: 2 * geom.n_v(),
            n_range: 32,
            azimuth: (-PI / 3.0, PI / 3.0),
            elevation: (-PI / 6.0, PI / 6.0),
            range: (3.0, 15.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (what, n) in [("azimuth", self.n_azimuth), ("elevation", self.n_elevation), ("range", self.n_range)] {
            if n < 2 {
                return Err(Error::InvalidParameter(format!("{what} grid needs at least 2 points, got {n}")));
            }
        }
        for (lo, hi) in [self.azimuth, self.elevation] {
            if !(lo < hi) || lo <= -PI / 2.0 || hi >= PI / 2.0 {
                return Err(Error::EmptyInterval { lo, hi });
            }
        }
        let (lo, hi) = self.range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_azimuth * self.n_elevation * self.n_range
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn azimuths(&self) -> Vec<f64> {
        sine_spaced(self.azimuth, self.n_azimuth)
    }

    pub fn elevations(&self) -> Vec<f64> {
        sine_spaced(self.elevation, self.n_elevation)
    }

    /// Ascending in `1/r`, so descending in range.
    pub fn ranges(&self) -> Vec<f64> {
        let (a, b) = (1.0 / self.range.1, 1.0 / self.range.0);
        (0..self.n_range)
            .map(|i| 1.0 / (a + (b - a) * i as f64 / (self.n_range - 1) as f64))
            .collect()
    }

    /// Flat index with range fastest, then elevation, then azimuth.
    pub fn index(&self, ia: usize, ie: usize, ir: usize) -> usize {
        (ia * self.n_elevation + ie) * self.n_range + ir
    }

    pub fn unflatten(&self, g: usize) -> (usize, usize, usize) {
        let ir = g % self.n_range;
        let rest = g / self.n_range;
        (rest / self.n_elevation, rest % self.n_elevation, ir)
    }

    /// `(azimuth, elevation, range)` of every grid point in flat order.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let (az, el, rg) = (self.azimuths(), self.elevations(), self.ranges());
        let mut out = Vec::with_capacity(self.len());
        for &a in &az {
            for &e in &el {
                for &r in &rg {
                    out.push((a, e, r));
                }
            }
        }
        out
    }
}

fn sine_spaced((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    let (a, b) = (lo.sin(), hi.sin());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).asin())
        .collect()
}

#[derive(Debug, Clone)]
pub struct PolarDictionary {
    /// `N x G` Fresnel atoms, each of norm `sqrt(N)`.
    pub atoms: Mat<C64>,
    /// `(alpha, beta, gamma)` of every atom.
    pub params: Vec<SpatialFreqs>,
    pub grid: PolarGrid,
}

pub fn build_polar_dictionary(geom: &UpaGeometry, grid: &PolarGrid) -> Result<PolarDictionary> {
    grid.validate()?;
    let k = geom.wavenumber();
    let params: Vec<SpatialFreqs> = grid
        .points()
        .into_iter()
        .map(|(psi, theta, r)| SpatialFreqs {
            alpha: k * geom.d_h() * psi.sin() * theta.cos(),
            beta: k * geom.d_v() * theta.sin(),
            gamma: PI / (geom.wavelength() * r),
        })
        .collect();
    let n = geom.n_elements();
    let mut atoms = Mat::<C64>::zeros(n, params.len());
    for (g, f) in params.iter().enumerate() {
        let b = fresnel_response(f, geom);
        for i in 0..n {
            atoms[(i, g)] = b[i];
        }
    }
    Ok(PolarDictionary {
        atoms,
        params,
        grid: *grid,
    })
}

/// Dictionary as seen through the sensing matrix, `H_bar * atoms`, with
/// column norms for normalized correlation.
#[derive(Debug, Clone)]
pub struct EffectiveDictionary {
    pub columns: Mat<C64>,
    pub norms: Vec<f64>,
}

impl PolarDictionary {
    pub fn effective(&self, h_bar: &Mat<C64>) -> Result<EffectiveDictionary> {
        if h_bar.ncols() != self.atoms.nrows() {
            return Err(Error::dims(self.atoms.nrows(), h_bar.ncols()));
        }
        let columns = h_bar * &self.atoms;
        let norms = (0..columns.ncols())
            .map(|g| columns.col(g).norm_l2())
            .collect();
        Ok(EffectiveDictionary { columns, norms })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub estimates: Vec<UeEstimate>,
    /// Selected atom indices, in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first and after every selection.
    pub residual_norms: Vec<f64>,
}

pub fn omp_estimate(
    y: &Col<C64>,
    h_bar: &Mat<C64>,
    dict: &PolarDictionary,
    geom: &UpaGeometry,
    k: usize,
) -> Result<OmpResult> {
    let eff = dict.effective(h_bar)?;
    omp_with(y, &eff, dict, geom, k)
}

/// OMP against a precomputed effective dictionary.
pub fn omp_with(
    y: &Col<C64>,
    eff: &EffectiveDictionary,
    dict: &PolarDictionary,
    geom: &UpaGeometry,
    k: usize,
) -> Result<OmpResult> {
    let g_total = eff.columns.ncols();
    if y.nrows() != eff.columns.nrows() {
        return Err(Error::dims(eff.columns.nrows(), y.nrows()));
    }
    if k > g_total {
        return Err(Error::InvalidParameter(format!("{k} atoms requested from a dictionary of {g_total}")));
    }
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut residual = y.clone();
    let mut residual_norms = vec![residual.norm_l2()];
    let mut coeffs = Col::<C64>::zeros(0);
    for _ in 0..k {
        let corr = eff.columns.adjoint() * &residual;
        let best = (0..g_total)
            .filter(|g| !support.contains(g) && eff.norms[*g] > 0.0)
            .max_by(|&a, &b| {
                let ca = corr[a].norm() / eff.norms[a];
                let cb = corr[b].norm() / eff.norms[b];
                ca.total_cmp(&cb)
            })
            .ok_or(Error::RankDeficient {
                requested: k,
                rank: support.len(),
            })?;
        support.push(best);
        let s = Mat::from_fn(y.nrows(), support.len(), |i, c| eff.columns[(i, support[c])]);
        let (c, cond) = least_squares(&s, y)?;
        if !(cond <= MAX_GRAM_CONDITION) {
            return Err(Error::RankDeficient {
                requested: k,
                rank: support.len() - 1,
            });
        }
        residual = y - &s * &c;
        residual_norms.push(residual.norm_l2());
        coeffs = c;
    }
    let estimates = support
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let f = dict.params[g];
            let ang = angles_from_pair(f.alpha, f.beta, geom);
            let mut e = UeEstimate::new(ang.azimuth, ang.elevation, PI / (geom.wavelength() * f.gamma), geom);
            e.alpha = f.alpha;
            e.beta = f.beta;
            e.gamma = f.gamma;
            e.gain = coeffs[i];
            e.clamped = ang.clamped;
            e
        })
        .collect();
    Ok(OmpResult {
        estimates,
        support,
        residual_norms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MusicSpectrum {
    pub grid: PolarGrid,
    /// Pseudo-spectrum in the grid's flat order.
    pub values: Vec<f64>,
    /// Set when `k >= L`: the noise subspace is then not identifiable from
    /// the snapshots and the spectrum is of limited use.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct MusicResult {
    pub spectrum: MusicSpectrum,
    pub estimates: Vec<UeEstimate>,
}

/// 3D-MUSIC on `N x L` RIS-side snapshots, scanning steering vectors of
/// the given response model.
pub fn music3d_ris(
    snapshots: &Mat<C64>,
    k: usize,
    grid: &PolarGrid,
    geom: &UpaGeometry,
    model: ResponseModel,
) -> Result<MusicResult> {
    grid.validate()?;
    let (n, l) = (snapshots.nrows(), snapshots.ncols());
    if n != geom.n_elements() {
        return Err(Error::dims(geom.n_elements(), n));
    }
    if l == 0 {
        return Err(Error::InvalidParameter("MUSIC needs at least one snapshot".into()));
    }
    if k >= n {
        return Err(Error::InvalidParameter(format!("model order {k} must be below N = {n}")));
    }
    let cov = Mat::from_fn(n, n, |i, j| {
        let s: C64 = (0..l).map(|t| snapshots[(i, t)] * snapshots[(j, t)].conj()).sum();
        s / l as f64
    });
    let eig = hermitian_eigen(&cov)?;
    let signal = eig.vectors.subcols(0, k).to_owned();

    // ||E_n^H b||^2 = ||b||^2 - ||E_s^H b||^2 for unit-modulus b
    let floor = 1e-12 * n as f64;
    let values: Vec<f64> = grid
        .points()
        .into_iter()
        .map(|(psi, theta, r)| {
            let b = response(&UeGroundTruth::new(psi, theta, r), geom, model);
            let proj = signal.adjoint() * &b;
            let noise = (b.squared_norm_l2() - proj.squared_norm_l2()).max(floor);
            1.0 / noise
        })
        .collect();
    let spectrum = MusicSpectrum {
        grid: *grid,
        values,
        degenerate: k >= l,
    };
    let pts = grid.points();
    let estimates = largest_peaks(&spectrum, k)
        .into_iter()
        .map(|g| {
            let (psi, theta, r) = pts[g];
            UeEstimate::new(psi, theta, r, geom)
        })
        .collect();
    Ok(MusicResult { spectrum, estimates })
}

/// Indices of the `k` largest local maxima (26-neighbourhood, ties broken
/// by flat index). Falls back to the largest remaining grid values when
/// there are fewer than `k` maxima.
pub fn largest_peaks(spec: &MusicSpectrum, k: usize) -> Vec<usize> {
    let g = &spec.grid;
    let v = &spec.values;
    let dims = [g.n_azimuth as i64, g.n_elevation as i64, g.n_range as i64];
    let is_peak = |flat: usize| -> bool {
        let (a, e, r) = g.unflatten(flat);
        let c = [a as i64, e as i64, r as i64];
        for da in -1..=1i64 {
            for de in -1..=1i64 {
                for dr in -1..=1i64 {
                    if (da, de, dr) == (0, 0, 0) {
                        continue;
                    }
                    let p = [c[0] + da, c[1] + de, c[2] + dr];
                    if (0..3).any(|i| p[i] < 0 || p[i] >= dims[i]) {
                        continue;
                    }
                    let other = g.index(p[0] as usize, p[1] as usize, p[2] as usize);
                    if v[other] > v[flat] || (v[other] == v[flat] && other < flat) {
                        return false;
                    }
                }
            }
        }
        true
    };
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut picked: Vec<usize> = order.iter().copied().filter(|&i| is_peak(i)).take(k).collect();
    for &i in &order {
        if picked.len() >= k {
            break;
        }
        if !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_bs_channel, stacked_sensing, BsLayout, PhaseSchedule};
    use crate::geometry::exact_response_at;
    use crate::testutil::{gaussian, rng};

    fn geom() -> UpaGeometry {
        UpaGeometry::half_wavelength(15, 0.3).unwrap()
    }

    fn small_grid() -> PolarGrid {
        PolarGrid {
            n_azimuth: 9,
            n_elevation: 7,
            n_range: 6,
            ..PolarGrid::for_geometry(&geom())
        }
    }

    #[test]
    fn grid_axes() {
        let g = small_grid();
        let az = g.azimuths();
        assert_eq!(az.len(), 9);
        assert!((az[0] + PI / 3.0).abs() < 1e-12 && (az[8] - PI / 3.0).abs() < 1e-12);
        let steps: Vec<f64> = az.windows(2).map(|w| w[1].sin() - w[0].sin()).collect();
        assert!(steps.iter().all(|s| (s - steps[0]).abs() < 1e-12));
        let r = g.ranges();
        assert!((r[0] - 15.0).abs() < 1e-12 && (r[5] - 3.0).abs() < 1e-12);
        let inv: Vec<f64> = r.windows(2).map(|w| 1.0 / w[1] - 1.0 / w[0]).collect();
        assert!(inv.iter().all(|s| (s - inv[0]).abs() < 1e-12));
        for flat in 0..g.len() {
            let (a, e, rr) = g.unflatten(flat);
            assert_eq!(g.index(a, e, rr), flat);
        }
    }

    #[test]
    fn dictionary_shape_and_norms() {
        let g = small_grid();
        let d = build_polar_dictionary(&geom(), &g).unwrap();
        assert_eq!(d.atoms.ncols(), 9 * 7 * 6);
        assert_eq!(d.params.len(), d.atoms.ncols());
        for c in [0, 100, 377] {
            assert!((d.atoms.col(c).norm_l2() - 15.0).abs() < 1e-10);
        }
        let bad = PolarGrid { n_range: 1, ..g };
        assert!(build_polar_dictionary(&geom(), &bad).is_err());
        let empty = PolarGrid { range: (5.0, 5.0), ..g };
        assert!(matches!(build_polar_dictionary(&geom(), &empty), Err(Error::EmptyInterval { .. })));
    }

    #[test]
    fn on_grid_atom_has_full_correlation() {
        let gm = geom();
        let d = build_polar_dictionary(&gm, &small_grid()).unwrap();
        let g0 = 200;
        let b = fresnel_response(&d.params[g0], &gm);
        let a = d.atoms.col(g0);
        let corr = (a.adjoint() * &b).norm() / a.norm_l2();
        assert!((corr - 15.0).abs() < 1e-10);
    }

    fn sensing() -> Mat<C64> {
        let gm = geom();
        let link = build_bs_channel(&gm, &BsLayout::default()).unwrap();
        stacked_sensing(&link, &PhaseSchedule::random(10, 225, 3)).unwrap()
    }

    #[test]
    fn omp_selects_planted_atom() {
        let gm = geom();
        let d = build_polar_dictionary(&gm, &small_grid()).unwrap();
        let h = sensing();
        let g0 = d.grid.index(6, 2, 4);
        let b = d.atoms.col(g0).to_owned();
        let y = &h * &b * faer::Scale(C64::new(0.3, -0.7));
        let res = omp_estimate(&y, &h, &d, &gm, 1).unwrap();
        assert_eq!(res.support, vec![g0]);
        let (psi, theta, r) = d.grid.points()[g0];
        let e = &res.estimates[0];
        assert!((e.azimuth - psi).abs() < 1e-12 && (e.elevation - theta).abs() < 1e-12);
        assert!((e.range - r).abs() < 1e-9);
        assert!((e.gain - C64::new(0.3, -0.7)).norm() < 1e-9);
        assert!(res.residual_norms[1] < 1e-10 * res.residual_norms[0]);
    }

    #[test]
    fn omp_residual_is_non_increasing() {
        let gm = geom();
        let d = build_polar_dictionary(&gm, &small_grid()).unwrap();
        let h = sensing();
        let mut r = rng(4);
        let y = Col::from_fn(h.nrows(), |_| gaussian(&mut r));
        let res = omp_estimate(&y, &h, &d, &gm, 6).unwrap();
        assert_eq!(res.residual_norms.len(), 7);
        assert!(res.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(omp_estimate(&y, &h, &d, &gm, 0).unwrap().estimates.is_empty());
    }

    #[test]
    fn omp_off_grid_error_is_bounded_below() {
        // a user midway between rings in sin(psi) sees the grid-mismatch floor
        let gm = geom();
        let g = small_grid();
        let d = build_polar_dictionary(&gm, &g).unwrap();
        let h = sensing();
        let az = g.azimuths();
        let el = g.elevations();
        let rg = g.ranges();
        let s_mid = 0.5 * (az[4].sin() + az[5].sin());
        let psi = s_mid.asin();
        let b = exact_or_fresnel(&gm, psi, el[3], rg[2]);
        let y = &h * &b;
        let res = omp_estimate(&y, &h, &d, &gm, 1).unwrap();
        let half_cell = 0.5 * (az[5].sin() - az[4].sin());
        let err = (res.estimates[0].azimuth.sin() - psi.sin()).abs();
        assert!(err >= half_cell * (1.0 - 1e-9), "error {err} below half cell {half_cell}");
    }

    fn exact_or_fresnel(gm: &UpaGeometry, psi: f64, theta: f64, r: f64) -> Col<C64> {
        let k = gm.wavenumber();
        fresnel_response(
            &SpatialFreqs {
                alpha: k * gm.d_h() * psi.sin() * theta.cos(),
                beta: k * gm.d_v() * theta.sin(),
                gamma: PI / (gm.wavelength() * r),
            },
            gm,
        )
    }

    fn snapshots(points: &[(f64, f64, f64)], l: usize, noise: f64, seed: u64) -> Mat<C64> {
        let gm = geom();
        let mut r = rng(seed);
        let bs: Vec<Col<C64>> = points.iter().map(|&(p, t, rr)| exact_response_at(p, t, rr, &gm)).collect();
        let mut x = Mat::<C64>::zeros(225, l);
        for t in 0..l {
            for b in &bs {
                let s = C64::from_polar(1.0, gaussian(&mut r).re * 3.0);
                for i in 0..225 {
                    x[(i, t)] += b[i] * s;
                }
            }
            for i in 0..225 {
                x[(i, t)] += gaussian(&mut r) * noise;
            }
        }
        x
    }

    #[test]
    fn music_peaks_at_planted_grid_point() {
        let gm = geom();
        let g = small_grid();
        let pts = g.points();
        let g0 = g.index(3, 5, 2);
        let x = snapshots(&[pts[g0]], 10, 0.01, 7);
        let res = music3d_ris(&x, 1, &g, &gm, ResponseModel::Exact).unwrap();
        assert!(res.spectrum.values.iter().all(|v| v.is_finite() && *v >= 0.0));
        let best = (0..g.len()).max_by(|&a, &b| res.spectrum.values[a].total_cmp(&res.spectrum.values[b])).unwrap();
        assert_eq!(best, g0);
        let e = &res.estimates[0];
        assert_eq!((e.azimuth, e.elevation, e.range), pts[g0]);
        assert!(!res.spectrum.degenerate);
    }

    #[test]
    fn music_invariant_to_common_phase() {
        let gm = geom();
        let g = small_grid();
        let pts = g.points();
        let x = snapshots(&[pts[40], pts[300]], 10, 0.1, 8);
        let rot = C64::from_polar(1.0, 1.234);
        let xr = Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * rot);
        let a = music3d_ris(&x, 2, &g, &gm, ResponseModel::Exact).unwrap();
        let b = music3d_ris(&xr, 2, &g, &gm, ResponseModel::Exact).unwrap();
        for (u, v) in a.spectrum.values.iter().zip(b.spectrum.values.iter()) {
            assert!((u - v).abs() <= 1e-8 * u.abs());
        }
    }

    #[test]
    fn music_flags_too_few_snapshots() {
        let gm = geom();
        let g = small_grid();
        let x = snapshots(&[g.points()[10]], 2, 0.1, 9);
        let res = music3d_ris(&x, 2, &g, &gm, ResponseModel::Exact).unwrap();
        assert!(res.spectrum.degenerate);
        assert_eq!(res.estimates.len(), 2);
        assert!(music3d_ris(&x, 225, &g, &gm, ResponseModel::Exact).is_err());
    }

    #[test]
    fn default_dictionary_builds_quickly() {
        let gm = geom();
        let t = std::time::Instant::now();
        let d = build_polar_dictionary(&gm, &PolarGrid::for_geometry(&gm)).unwrap();
        assert_eq!(d.atoms.ncols(), 30 * 30 * 32);
        assert!(t.elapsed().as_secs_f64() < 10.0);
    }
}
