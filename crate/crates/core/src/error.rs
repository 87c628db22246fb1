use thiserror::Error;

use crate::system::SystemParameters;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("operation requires a Hermitian model")]
    NonHermitian,

    #[error("propagation failed at gamma = {}, delta = {}: {source}", .xi.gamma, .xi.delta)]
    AtGridPoint {
        xi: SystemParameters,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
