use thiserror::Error;

use crate::data::DataError;
use crate::formula::FormulaError;
use crate::glm::GlmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Formula(#[from] FormulaError),

    #[error(transparent)]
    Glm(#[from] GlmError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("too few rows for model `{spec}`: {rows} available, at least {required} required")]
    TooFewRows {
        spec: String,
        rows: usize,
        required: usize,
    },

    #[error("risk ratio undefined: the unexposed mean is zero")]
    RatioUndefined,

    #[error("cannot pool on the log scale: per-imputation estimate {0} is not positive")]
    PoolingScale(f64),

    #[error("covariate `{0}` has zero standard deviation")]
    ZeroVariance(String),

    #[error("exposure group is empty after imputation")]
    EmptyGroup,

    #[error("rank variance is zero; correlation undefined")]
    ZeroRankVariance,

    #[error("every candidate failed")]
    AllCandidatesFailed,

    #[error("{failed} of {requested} bootstrap replicates failed (limit is 10%)")]
    TooManyBootstrapFailures { failed: usize, requested: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
