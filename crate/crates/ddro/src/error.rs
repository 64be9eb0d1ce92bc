use thiserror::Error;

/// Errors raised by fitting, oracles and solvers.
///
/// `Validation` covers bad inputs and broken preconditions; `Numeric` covers
/// failures of an iterative method on otherwise valid inputs. The CLI maps the
/// former to exit code 2 and the latter to exit code 1.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdroError {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("support box required")]
    SupportBoxRequired,

    #[error("sample at row {row} is not one of the declared support points")]
    OffSupport { row: usize },

    #[error("insufficient data for (eps={eps}, alpha={alpha}, d={d})")]
    InsufficientData { eps: f64, alpha: f64, d: usize },

    #[error("statistic returned a non-finite value on resample {replicate}")]
    NonFiniteStatistic { replicate: usize },

    #[error("set was fitted for eps={fitted} and cannot be queried at eps={requested}")]
    EpsMismatch { fitted: f64, requested: f64 },

    #[error("unattainable threshold: {0}")]
    Unattainable(String),

    #[error("robust infeasible: {0}")]
    RobustInfeasible(String),

    #[error("unstable sample: mean interarrival {mean_t} does not exceed mean service {mean_x}")]
    UnstableSample { mean_x: f64, mean_t: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl DdroError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        DdroError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        DdroError::Numeric(message.into())
    }

    /// True for errors caused by the caller's inputs rather than by a numeric method.
    pub fn is_validation(&self) -> bool {
        !matches!(self, DdroError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, DdroError>;
