use thiserror::Error;

use crate::topology::SiteId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("site {0} does not belong to the topology")]
    UnknownSite(SiteId),

    #[error("radius {radius} out of range (maximum {max})")]
    RadiusOutOfRange { radius: u32, max: u32 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("integration unstable at t={time}: u1={u1}, u2={u2}; retry with a smaller dt")]
    IntegrationUnstable { time: f64, u1: f64, u2: f64 },

    #[error("resident strain is subcritical (lambda={lambda} <= delta={delta}); no equilibrium to invade")]
    SubcriticalResident { lambda: f64, delta: f64 },

    #[error("rate table audit failed: {0}")]
    RateAudit(String),

    #[error("bracket ({lo}, {hi}) does not separate: {detail}; widen the bracket")]
    NonSeparatingBracket { lo: f64, hi: f64, detail: String },

    #[error("conditioning event occurred {observed} times, at least {required} needed")]
    RareConditioning { observed: usize, required: usize },

    #[error("state space too large: {sites} sites exceeds the oracle budget of {max}")]
    OracleBudget { sites: usize, max: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
