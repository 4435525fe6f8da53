use std::fmt;

/// Which kind of parameter block an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Individual,
    Marker,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Individual => f.write_str("individual"),
            Unit::Marker => f.write_str("marker"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{unit} {index} lies on the boundary of the parameter space")]
    Boundary { unit: Unit, index: usize },

    #[error("log-likelihood is -inf at individual {individual}, marker {marker}")]
    InfiniteLikelihood { individual: usize, marker: usize },

    #[error("information block of {unit} {index} is singular (smallest eigenvalue {min_eigenvalue:.3e})")]
    SingularBlock {
        unit: Unit,
        index: usize,
        min_eigenvalue: f64,
    },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
