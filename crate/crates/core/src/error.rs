use thiserror::Error;

/// Errors raised by the analytic and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument `{name}` = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid degree distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid success model: {0}")]
    InvalidModel(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("invalid capacity envelope: {0}")]
    InvalidEnvelope(String),

    /// A computed probability left [0, 1] by more than the rounding guard band.
    #[error("probability {value} escaped [0, 1] beyond the rounding guard band ({context})")]
    ProbabilityOutOfRange { value: f64, context: &'static str },

    #[error("search for {what} did not bracket a solution on [{lo}, {hi}]")]
    NotBracketed { what: &'static str, lo: f64, hi: f64 },

    #[error("{what} is undefined at load {load}: {reason}")]
    Undefined {
        what: &'static str,
        load: f64,
        reason: String,
    },

    #[error("threshold scan: {0}")]
    Scan(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, inf)",
        })
    }
}
