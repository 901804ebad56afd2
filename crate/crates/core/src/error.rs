use thiserror::Error;

use crate::graph::Labeling;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid labeling: {0}")]
    InvalidLabeling(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("enumeration budget exceeded: {states} joint states > budget {budget}")]
    EnumerationBudget { states: f64, budget: u64 },

    /// Branch-and-bound ran out of node expansions; carries what it had.
    #[error("branch-and-bound budget of {expansions} expansions exhausted (incumbent {incumbent_value}, bound {upper_bound})")]
    SearchBudget {
        expansions: usize,
        incumbent: Option<Labeling>,
        incumbent_value: f64,
        upper_bound: f64,
    },

    #[error("quadratic program failed: {0}")]
    Qp(String),

    #[error("dataset format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
