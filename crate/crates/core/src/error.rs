use thiserror::Error;

/// Errors produced by the design, metric and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A size guard refused the request; the message carries the estimated cost.
    #[error("refused: {0}")]
    Refused(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("branch-and-bound node limit of {limit} reached (incumbent value {incumbent:?})")]
    NodeLimit { limit: usize, incumbent: Option<f64> },

    /// No rounded iterate of the smooth solver satisfied the discrete constraint.
    #[error("no feasible rounded channel found ({blocks} blocks > {max_blocks} allowed)")]
    NoFeasibleRounding {
        blocks: usize,
        max_blocks: usize,
        best_infeasible: Box<crate::model::Channel>,
    },

    #[error("threshold calibration failed: {message}")]
    Calibration { message: String, trace: Vec<(f64, f64)> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
