use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter vector: {0}")]
    InvalidVector(String),

    #[error("invalid gain sequence (a = {a}, alpha = {alpha}): Condition 3 requires a > 0 and alpha in (0.5, 1]")]
    InvalidGain { a: f64, alpha: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate parameter: {0}")]
    Degenerate(String),

    #[error("estimator {estimator} is not supported on problem {problem}")]
    UnsupportedEstimator { estimator: String, problem: String },

    #[error("iterate diverged at k = {k}: {detail}")]
    Diverged { k: usize, detail: String },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { asymmetry: f64 },

    #[error("Fabian stability violated: eigenvalues {lambda_i} + {lambda_j} - beta_plus {beta_plus} <= 1e-12")]
    Unstable {
        lambda_i: f64,
        lambda_j: f64,
        beta_plus: f64,
    },

    #[error("matrix is singular")]
    Singular,

    #[error("no intersection: tr(Sigma) = {tr_unbiased} does not exceed tr(Sigma') = {tr_biased}")]
    NoIntersection { tr_unbiased: f64, tr_biased: f64 },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("experiment error: {0}")]
    Experiment(String),

    #[error("unknown preset `{0}` (expected fig2.1, fig4.1 or fig4.2)")]
    UnknownPreset(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
