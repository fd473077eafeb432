use std::fmt;

use thiserror::Error;

/// A single parameter that failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub(crate) fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlmError {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParams(Vec<Violation>),

    #[error("density and tail are not defined for a point-mass claim law")]
    UnsupportedForPointMass,

    #[error("operation not supported under truncation mode {0}")]
    UnsupportedMode(&'static str),

    #[error("kappa = {kappa} violates kappa * c < 1 with c = {limit}")]
    DomainError { kappa: f64, limit: f64 },

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    QuadratureFailure { tolerance: f64, estimate: f64 },

    #[error("no root of h in [0, 1/c): h(0) = {h_at_zero}")]
    NoRootInRange { h_at_zero: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("wealth became non-positive on path {path} at t = {time}")]
    PositivityBreach { path: usize, time: f64 },

    #[error("utility overflow: terminal wealth {wealth:e} on path {path} with eta = {eta}")]
    UtilityOverflow { path: usize, wealth: f64, eta: f64 },

    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = AlmError> = std::result::Result<T, E>;
