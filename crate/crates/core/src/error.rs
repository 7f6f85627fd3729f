use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the localization pipeline and its building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("argument {value} outside the arcsin domain while mapping {what}")]
    OutOfDomain { what: &'static str, value: f64 },

    #[error("empty interval [{lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("data residual {residual:.3e} outside range of the sensing map exceeds eps = {eps:.3e}")]
    InfeasibleEps { residual: f64, eps: f64 },

    #[error("model order {requested} exceeds numerical rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("repeated eigenvalues in the combined pencil after {retries} retries")]
    PairingAmbiguity { retries: usize },

    #[error("fewer than two usable chirp ratios on axis {axis}")]
    DegenerateChirp { axis: &'static str },

    #[error("gram matrix condition number {cond:.3e} above limit")]
    SingularGram { cond: f64 },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Error {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
