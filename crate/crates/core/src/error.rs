use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A size product or expected event count exceeds the configured budget.
    #[error("sizing: {what} = {value} exceeds budget {limit}")]
    Budget {
        what: String,
        value: u128,
        limit: u128,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    /// Spin rates violating attractiveness on a covering pair of patterns.
    #[error("rates are not attractive: {0}")]
    NotAttractive(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Block geometry precondition failure, naming the inequality.
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("numerical: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name: name.into(),
        reason: reason.into(),
    }
}

/// Rejects negative, NaN and infinite rates.
pub(crate) fn check_rate(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(param(
            name,
            format!("must be a finite non-negative rate, got {value}"),
        ))
    }
}
