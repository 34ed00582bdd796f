use thiserror::Error;

/// Errors raised by the mechanism, distribution and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid support [{lo}, {hi}]: {reason}")]
    InvalidSupport { lo: f64, hi: f64, reason: &'static str },

    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("inverse-hazard ratio F/pdf is not strictly increasing near {at}")]
    HazardNotIncreasing { at: f64 },

    #[error("value {value} lies outside the type support [{lo}, {hi}]")]
    OutsideSupport { value: f64, lo: f64, hi: f64 },

    #[error("density vanishes at {0}")]
    ZeroDensity(f64),

    #[error("invalid market parameters: {0}")]
    InvalidMarket(String),

    #[error("type profile has {got} entries, expected {expected}")]
    ProfileLength { got: usize, expected: usize },

    #[error("creditor index {index} out of range for {creditors} creditors")]
    CreditorIndex { index: usize, creditors: usize },

    #[error("invalid quadrature specification: {0}")]
    InvalidQuadrature(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
