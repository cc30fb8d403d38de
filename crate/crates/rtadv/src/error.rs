//! Crate-wide error type.
//!
//! One enum for the whole lab: numeric-shape violations, malformed artifacts
//! on disk, configuration mistakes, and exhausted query budgets all surface
//! as structured variants so the CLI can report them without string-matching.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RtError {
    /// Tensor/layer plumbing errors: mismatched shapes, non-composable
    /// stacks, out-of-range indices.
    #[error("shape error: {0}")]
    Shape(String),

    /// A numeric routine produced a non-finite value (exploding training,
    /// bad input); message carries the site and offending quantity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Invalid configuration or argument values.
    #[error("invalid config: {0}")]
    Config(String),

    /// Serialization/deserialization failures for the on-disk formats.
    /// `what` names the artifact, `detail` the failing record or field.
    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    /// The metered query budget of a black-box facade was exhausted.
    #[error("query budget exhausted after {used} queries (budget {budget})")]
    BudgetExhausted { used: u64, budget: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RtError {
    pub fn shape(msg: impl Into<String>) -> Self {
        RtError::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        RtError::Config(msg.into())
    }

    pub fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        RtError::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, RtError>;
