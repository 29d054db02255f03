use thiserror::Error;

pub type Result<T> = std::result::Result<T, BssError>;

#[derive(Debug, Error)]
pub enum BssError {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter violates a documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A numerical procedure failed to reach its tolerance.
    #[error("numerical error: {message} (estimate {estimate:e}, error bound {error_bound:e})")]
    Numerical {
        message: String,
        estimate: f64,
        error_bound: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BssError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        BssError::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        BssError::InvalidParameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        BssError::Numerical {
            message: msg.into(),
            estimate: f64::NAN,
            error_bound: f64::NAN,
        }
    }

    /// True for failures of numerical procedures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, BssError::Numerical { .. })
    }
}
