use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid label space: need at least 2 labels, got {0}")]
    InvalidLabelSpace(usize),

    #[error("label {label} outside 1..={num_labels}")]
    InvalidLabel { label: u32, num_labels: usize },

    #[error("budget_exceeds_pool: budget {budget} > pool size {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },

    #[error("zero_posterior_mass: observation at example {example} is impossible under the current belief")]
    ZeroPosteriorMass { example: usize },

    #[error("unknown example index {0}")]
    UnknownExample(usize),

    #[error("bad_input: {0}")]
    BadInput(String),

    #[error("instance_too_large: {0}")]
    InstanceTooLarge(String),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("empty sequence")]
    EmptySequence,

    #[error("no target (labelled) examples in dataset")]
    NoTargetExamples,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
