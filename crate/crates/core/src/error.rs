//! Error type shared by every stage of the pipeline.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    /// Problem size exceeds what an exhaustive or dense method will accept.
    #[error("refusing {what}: size {size} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("eigensolver did not converge at tau = {tau}")]
    NoConvergence { tau: f64 },

    /// Norm drift of a single propagation step exceeded the tolerance.
    #[error("integration failure: norm drift {drift:e} at step {step} of {steps}")]
    IntegrationFailure { drift: f64, step: usize, steps: usize },

    #[error("evolution failed for instances: {}", ids.join(", "))]
    GroupEvaluation { ids: Vec<String>, first: Box<Error> },

    /// Target fidelity not reached below the annealing-time cap.
    #[error("target fidelity {target} not reached below T = {cap} (best {best_fidelity:.4})")]
    Hardness {
        cap: f64,
        target: f64,
        best_fidelity: f64,
    },

    #[error("group {group} holds {available} instances, quota is {quota}")]
    InfeasibleQuota {
        group: usize,
        available: usize,
        quota: usize,
    },

    #[error("test group {group} is empty; draw a larger sample")]
    EmptyTestGroup { group: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
