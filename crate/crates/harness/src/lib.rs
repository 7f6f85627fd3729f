//! Seeded Monte Carlo experiments comparing the gridless estimator with
//! OMP and RIS-side 3D-MUSIC, plus the CSV surface the plotting tool reads.

pub mod config;
pub mod experiment;
pub mod output;
pub mod scene;
pub mod trial;

pub use config::{ExperimentConfig, Method};
pub use experiment::{run_error_vs_k, run_rmse_vs_snr};
pub use trial::{run_trial, Context, MetricsRow};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] risloc::Error),
}
