use thiserror::Error;

use crate::mellin::ComplexStrip;

/// Errors produced by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {re}{im:+}i lies outside the analyticity strip {strip}")]
    StripViolation { re: f64, im: f64, strip: ComplexStrip },

    #[error("quadrature did not converge: estimated error {estimate:.3e} exceeds tolerance {tolerance:.3e}")]
    NonConvergence { estimate: f64, tolerance: f64 },

    #[error("gamma function pole at z = {0}")]
    PoleError(f64),

    #[error("moment system is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("evaluation point {x} outside the tabulated range [-{limit}, {limit}]")]
    GridResolution { x: f64, limit: f64 },

    #[error("line integrand does not decay: {0}")]
    DivergentIntegrand(String),

    #[error("error density is not identifiable on the integration line (margin {0:.3e})")]
    NotIdentifiable(f64),

    #[error("sample is empty")]
    EmptySample,

    #[error("argument outside the domain of the rule: {0}")]
    DomainError(String),

    #[error("regression needs at least 3 distinct design points, got {0}")]
    DegenerateDesign(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    /// Short stable name of the variant, used by the CLI and the C ABI.
    pub fn name(&self) -> &'static str {
        match self {
            Error::StripViolation { .. } => "StripViolation",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::PoleError(_) => "PoleError",
            Error::IllConditioned(_) => "IllConditioned",
            Error::GridResolution { .. } => "GridResolution",
            Error::DivergentIntegrand(_) => "DivergentIntegrand",
            Error::NotIdentifiable(_) => "NotIdentifiable",
            Error::EmptySample => "EmptySample",
            Error::DomainError(_) => "DomainError",
            Error::DegenerateDesign(_) => "DegenerateDesign",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
