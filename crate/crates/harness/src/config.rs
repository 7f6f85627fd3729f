//! Experiment configuration. Every field has a default, so an empty TOML
//! file describes the reference setup.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use risloc::anm::AnmOptions;
use risloc::baselines::PolarGrid;
use risloc::channel::{BsLayout, ResponseModel};
use risloc::geometry::UpaGeometry;
use risloc::mapp::MappOptions;
use risloc::recovery::RangeEstimator;

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub bs: BsConfig,
    /// Pilot slots `L`.
    pub pilots: usize,
    pub subspace: SubspaceConfig,
    pub scene: SceneConfig,
    pub sweep: SweepConfig,
    pub trials: usize,
    pub seeds: SeedConfig,
    pub methods: Vec<Method>,
    /// Model used to synthesize the RIS responses.
    pub response_model: ModelName,
    pub solver: SolverConfig,
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            bs: BsConfig::default(),
            pilots: 10,
            subspace: SubspaceConfig::default(),
            scene: SceneConfig::default(),
            sweep: SweepConfig::default(),
            trials: 50,
            seeds: SeedConfig::default(),
            methods: vec![Method::Proposed, Method::Omp, Method::MusicRis],
            response_model: ModelName::Fresnel,
            solver: SolverConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_h: usize,
    pub n_v: usize,
    pub wavelength: f64,
    /// Element spacings in metres; unset means half a wavelength.
    pub d_h: Option<f64>,
    pub d_v: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            n_h: 15,
            n_v: 15,
            wavelength: 0.3,
            d_h: None,
            d_v: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BsConfig {
    pub m_antennas: usize,
    pub separation: f64,
}

impl Default for BsConfig {
    fn default() -> Self {
        Self {
            m_antennas: 15,
            separation: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceConfig {
    pub j_h: usize,
    pub j_v: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Relative widening of the chirp-rate interval on both ends.
    pub guard: f64,
    /// Chirp rates sampled for the SVD.
    pub grid_size: usize,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self {
            j_h: 3,
            j_v: 3,
            r_min: 3.0,
            r_max: 15.0,
            guard: 0.1,
            grid_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub azimuth: [f64; 2],
    pub elevation: [f64; 2],
    pub range: [f64; 2],
    /// Redraw users until every pair differs by at least `pi / N_x` in both
    /// spatial frequencies.
    pub enforce_separation: bool,
    pub max_redraws: usize,
    /// Transmit power `p_k` in watts.
    pub power: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            azimuth: [-PI / 3.0, PI / 3.0],
            elevation: [-PI / 6.0, PI / 6.0],
            range: [3.0, 15.0],
            enforce_separation: true,
            max_redraws: 10_000,
            power: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// SNR points of the RMSE-vs-SNR experiment, dB per received sample.
    pub snr_db: Vec<f64>,
    /// Users in the RMSE-vs-SNR experiment.
    pub k: usize,
    /// User counts of the error-vs-K experiment.
    pub k_list: Vec<usize>,
    /// SNR of the error-vs-K experiment.
    pub k_snr_db: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: (0..9).map(|i| -10.0 + 5.0 * i as f64).collect(),
            k: 2,
            k_list: vec![1, 2, 3],
            k_snr_db: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    /// Root of all per-trial seeds.
    pub base: u64,
    /// RIS phase schedule, fixed across trials.
    pub phases: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            base: 20_240_901,
            phases: 21,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// SDP, pencil pairing and the chirp-ratio range fit.
    Proposed,
    /// Same SDP solve and pairing; chirp coefficients refit on the
    /// measurements, range by subspace coefficient matching.
    ProposedSm,
    Omp,
    MusicRis,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::ProposedSm, Method::Omp, Method::MusicRis];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedSm => "proposed-sm",
            Method::Omp => "omp",
            Method::MusicRis => "music-ris",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Self::ALL.into_iter().find(|m| m.name() == s.trim())
    }

    pub fn range_estimator(self) -> Option<RangeEstimator> {
        match self {
            Method::Proposed => Some(RangeEstimator::ChirpRatio),
            Method::ProposedSm => Some(RangeEstimator::DataRefit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    Exact,
    Fresnel,
}

impl From<ModelName> for ResponseModel {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Exact => ResponseModel::Exact,
            ModelName::Fresnel => ResponseModel::Fresnel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rho: f64,
    pub adaptive_rho: bool,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub relaxation: f64,
    pub max_iters: usize,
    /// Multiplier on the noise-derived data-fit radius.
    pub eps_scale: f64,
    pub rank_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let a = AnmOptions::default();
        Self {
            rho: a.rho,
            adaptive_rho: a.adaptive_rho,
            abs_tol: a.abs_tol,
            rel_tol: a.rel_tol,
            relaxation: a.relaxation,
            max_iters: a.max_iters,
            eps_scale: 1.0,
            rank_tol: MappOptions::default().rank_tol,
        }
    }
}

impl SolverConfig {
    pub fn anm(&self) -> AnmOptions {
        AnmOptions {
            rho: self.rho,
            adaptive_rho: self.adaptive_rho,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            relaxation: self.relaxation,
            max_iters: self.max_iters,
            ..AnmOptions::default()
        }
    }

    pub fn mapp(&self) -> MappOptions {
        MappOptions {
            rank_tol: self.rank_tol,
            ..MappOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Unset counts default to `2 N_H`, `2 N_V` and 32.
    pub n_azimuth: Option<usize>,
    pub n_elevation: Option<usize>,
    pub n_range: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_azimuth: None,
            n_elevation: None,
            n_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub omp_grid: GridConfig,
    pub music_grid: GridConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            omp_grid: GridConfig::default(),
            music_grid: GridConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.geometry()?;
        if self.pilots == 0 {
            return bad("pilots must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("no methods enabled".into());
        }
        let s = &self.scene;
        for (name, [lo, hi]) in [("azimuth", s.azimuth), ("elevation", s.elevation), ("range", s.range)] {
            if !(lo < hi) {
                return bad(format!("scene {name} bounds [{lo}, {hi}] are empty"));
            }
        }
        if s.range[0] <= 0.0 {
            return bad("scene ranges must be positive".into());
        }
        if !(s.power > 0.0) {
            return bad("power must be positive".into());
        }
        if self.sweep.k == 0 || self.sweep.k_list.iter().any(|&k| k == 0) {
            return bad("user counts must be positive".into());
        }
        if self.sweep.snr_db.iter().any(|v| v.is_nan()) || self.sweep.k_snr_db.is_nan() {
            return bad("SNR values must be numbers".into());
        }
        if !(self.solver.eps_scale >= 0.0) {
            return bad("eps_scale must be non-negative".into());
        }
        self.omp_grid()
            .validate()
            .and(self.music_grid().validate())
            .or_else(|e| bad(format!("baseline grid: {e}")))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<UpaGeometry, HarnessError> {
        let g = &self.geometry;
        let half = g.wavelength / 2.0;
        UpaGeometry::new(g.n_h, g.n_v, g.d_h.unwrap_or(half), g.d_v.unwrap_or(half), g.wavelength)
            .map_err(|e| HarnessError::Config(format!("geometry: {e}")))
    }

    pub fn bs_layout(&self) -> BsLayout {
        BsLayout {
            m_antennas: self.bs.m_antennas,
            separation: self.bs.separation,
            spacing: None,
        }
    }

    fn grid(&self, g: &GridConfig) -> PolarGrid {
        let s = &self.scene;
        PolarGrid {
            n_azimuth: g.n_azimuth.unwrap_or(2 * self.geometry.n_h),
            n_elevation: g.n_elevation.unwrap_or(2 * self.geometry.n_v),
            n_range: g.n_range.unwrap_or(32),
            azimuth: (s.azimuth[0], s.azimuth[1]),
            elevation: (s.elevation[0], s.elevation[1]),
            range: (s.range[0], s.range[1]),
        }
    }

    pub fn omp_grid(&self) -> PolarGrid {
        self.grid(&self.baselines.omp_grid)
    }

    pub fn music_grid(&self) -> PolarGrid {
        self.grid(&self.baselines.music_grid)
    }

    pub fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_constants() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!((c.geometry.n_h, c.geometry.n_v, c.geometry.wavelength), (15, 15, 0.3));
        let g = c.geometry().unwrap();
        assert_eq!((g.d_h(), g.d_v()), (0.15, 0.15));
        assert_eq!((c.bs.m_antennas, c.bs.separation), (15, 6.0));
        assert_eq!(c.pilots, 10);
        assert_eq!((c.subspace.j_h, c.subspace.j_v, c.subspace.r_min, c.subspace.r_max), (3, 3, 3.0, 15.0));
        assert_eq!(c.scene.azimuth, [-PI / 3.0, PI / 3.0]);
        assert_eq!(c.scene.elevation, [-PI / 6.0, PI / 6.0]);
        assert_eq!(c.scene.range, [3.0, 15.0]);
        assert_eq!(c.trials, 50);
        assert_eq!(c.sweep.k, 2);
        assert_eq!(c.sweep.k_list, vec![1, 2, 3]);
        assert_eq!(c.sweep.k_snr_db, 15.0);
        assert_eq!(c.sweep.snr_db, vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
        let og = c.omp_grid();
        assert_eq!((og.n_azimuth, og.n_elevation, og.n_range), (30, 30, 32));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = ExperimentConfig::default();
        c.trials = 3;
        c.methods = vec![Method::Omp];
        c.baselines.music_grid.n_range = Some(8);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(back.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn partial_files_and_bad_values() {
        let c = ExperimentConfig::from_toml("trials = 4\n[sweep]\nsnr_db = [0.0, 10.0]\n").unwrap();
        assert_eq!(c.trials, 4);
        assert_eq!(c.sweep.snr_db, vec![0.0, 10.0]);
        assert_eq!(c.sweep.k, 2);
        assert!(ExperimentConfig::from_toml("trials = 0").is_err());
        assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
        assert!(ExperimentConfig::from_toml("[scene]\nrange = [5.0, 4.0]").is_err());
        assert!(ExperimentConfig::from_toml("methods = [\"nope\"]").is_err());
        assert!(ExperimentConfig::from_toml("[baselines.omp_grid]\nn_range = 1").is_err());
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("nope"), None);
    }
}
