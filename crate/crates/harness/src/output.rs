//! CSV rows, the aggregated table and the metadata sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use risloc::metrics::summarize;

use crate::config::ExperimentConfig;
use crate::experiment::sort_rows;
use crate::trial::MetricsRow;
use crate::HarnessError;

pub fn write_rows(path: &Path, rows: &[MetricsRow]) -> Result<(), HarnessError> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut w = csv::Writer::from_path(path)?;
    for r in &sorted {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Statistics of one `(method, snr, k)` operating point over its
/// successful trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub snr_db: f64,
    pub k: usize,
    pub trials_ok: usize,
    pub trials_failed: usize,
    /// Root-mean of the per-trial squared RMSEs.
    pub rmse_azimuth: Option<f64>,
    pub rmse_elevation: Option<f64>,
    pub rmse_range: Option<f64>,
    pub mean_positioning_error: Option<f64>,
    pub median_rmse_azimuth: Option<f64>,
    pub median_rmse_elevation: Option<f64>,
    pub median_rmse_range: Option<f64>,
    pub median_positioning_error: Option<f64>,
}

pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut groups: Vec<(String, usize, f64, Vec<&MetricsRow>)> = Vec::new();
    for r in &sorted {
        match groups.last_mut() {
            Some((m, k, s, g)) if *m == r.method && *k == r.k && s.total_cmp(&r.snr_db).is_eq() => g.push(r),
            _ => groups.push((r.method.clone(), r.k, r.snr_db, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(method, k, snr_db, g)| {
            let ok: Vec<&MetricsRow> = g.iter().copied().filter(|r| r.is_ok()).collect();
            let col = |f: fn(&MetricsRow) -> Option<f64>| summarize(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let az = col(|r| r.rmse_azimuth);
            let el = col(|r| r.rmse_elevation);
            let rg = col(|r| r.rmse_range);
            let pe = col(|r| r.positioning_error);
            AggregateRow {
                method,
                snr_db,
                k,
                trials_ok: ok.len(),
                trials_failed: g.len() - ok.len(),
                rmse_azimuth: az.map(|s| s.rms),
                rmse_elevation: el.map(|s| s.rms),
                rmse_range: rg.map(|s| s.rms),
                mean_positioning_error: pe.map(|s| s.mean),
                median_rmse_azimuth: az.map(|s| s.median),
                median_rmse_elevation: el.map(|s| s.median),
                median_rmse_range: rg.map(|s| s.median),
                median_positioning_error: pe.map(|s| s.median),
            }
        })
        .collect()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub experiment: String,
    pub tool_version: String,
    pub config_hash: String,
    pub git_revision: String,
    pub rows: usize,
    pub decisions: BTreeMap<String, String>,
    pub config: ExperimentConfig,
}

/// Revision of the working tree, or `unknown` outside a git checkout.
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

pub fn decisions(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let og = cfg.omp_grid();
    let mg = cfg.music_grid();
    let grid = |g: &risloc::baselines::PolarGrid| {
        format!(
            "{} azimuths x {} elevations uniform in sine, {} ranges uniform in 1/r over [{}, {}] m",
            g.n_azimuth, g.n_elevation, g.n_range, g.range.0, g.range.1
        )
    };
    let mut d = BTreeMap::new();
    d.insert("omp_grid".into(), grid(&og));
    d.insert("music_grid".into(), grid(&mg));
    d.insert(
        "separation_rule".into(),
        if cfg.scene.enforce_separation {
            format!(
                "users redrawn until every pair has |d alpha| >= pi/{} and |d beta| >= pi/{}",
                cfg.geometry.n_h, cfg.geometry.n_v
            )
        } else {
            "none".into()
        },
    );
    d.insert(
        "snr".into(),
        "per received sample: ||clean||^2 / (len * sigma^2); same rule on RIS-side snapshots".into(),
    );
    d.insert(
        "common_random_numbers".into(),
        "scene and unit noise draws depend on (seed, k, trial) only; SNR scales the noise".into(),
    );
    d.insert(
        "music_snapshots".into(),
        "x(t) = sum_k eta_k s_k(t) b_k + n(t), s_k(t) unit modulus with random phase".into(),
    );
    d.insert("response_model".into(), format!("{:?}", cfg.response_model).to_lowercase());
    d.insert(
        "failures".into(),
        "failed trials keep their row with empty error fields and are excluded from aggregates".into(),
    );
    d
}

/// Paths of the three artifacts of an experiment run.
pub fn artifact_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.csv")),
        dir.join(format!("{name}_aggregate.csv")),
        dir.join(format!("{name}_meta.toml")),
    )
}

/// Writes raw rows, the aggregated table and the metadata sidecar.
pub fn write_experiment(
    dir: &Path,
    name: &str,
    cfg: &ExperimentConfig,
    rows: &[MetricsRow],
) -> Result<Vec<AggregateRow>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e))?;
    let (raw, agg, meta) = artifact_paths(dir, name);
    write_rows(&raw, rows)?;
    let table = aggregate(rows);
    write_aggregate(&agg, &table)?;
    let m = Metadata {
        experiment: name.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        git_revision: git_revision(),
        rows: rows.len(),
        decisions: decisions(cfg),
        config: cfg.clone(),
    };
    let text = toml::to_string(&m).map_err(|e| HarnessError::Config(e.to_string()))?;
    fs::write(&meta, text).map_err(|e| HarnessError::Io(meta.display().to_string(), e))?;
    Ok(table)
}
