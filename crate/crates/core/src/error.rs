use thiserror::Error;

use crate::fit::DescentViolation;

pub type Result<T> = std::result::Result<T, SysidError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SysidError {
    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error(
        "`{name}` is not symmetric positive definite (smallest eigenvalue {min_eigenvalue:e})"
    )]
    NotSpd { name: String, min_eigenvalue: f64 },

    #[error("`{name}` is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { name: String, asymmetry: f64 },

    #[error("weight `{name}` must be positive, got {value}")]
    NonPositiveWeight { name: String, value: f64 },

    #[error("`{name}` contains a non-finite entry")]
    NonFinite { name: String },

    #[error("invalid grid: horizon {horizon} and {intervals} intervals (need T > 0 and M >= 1)")]
    InvalidGrid { horizon: f64, intervals: usize },

    #[error("unknown control kind `{0}` (expected zero, step, sine or multisine)")]
    UnknownKind(String),

    #[error("invalid parameters for control `{kind}`: {reason}")]
    InvalidControlParams { kind: String, reason: String },

    #[error("singular system in {context}")]
    SingularSystem { context: String },

    #[error("{0}")]
    DescentViolation(Box<DescentViolation>),
}

impl SysidError {
    pub fn shape(field: &str, expected: impl ToString, found: impl ToString) -> Self {
        SysidError::DimensionMismatch {
            field: field.to_string(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn singular(context: &str) -> Self {
        SysidError::SingularSystem {
            context: context.to_string(),
        }
    }
}
