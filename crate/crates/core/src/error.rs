use thiserror::Error;

use crate::mdp::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid instance ({} violation(s)): {}", .0.len(), format_violations(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid adherence specification: {0}")]
    InvalidSpec(String),

    #[error("state-action adherence requires a deterministic baseline policy")]
    RandomizedBaseline,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration guard exceeded: {what} needs {count} cases, limit is {limit}")]
    GuardExceeded { what: &'static str, count: f64, limit: f64 },

    #[error("zero return at theta = {theta}; proportional deterioration is undefined")]
    ZeroDenominator { theta: f64 },

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
