use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    AsymmetricDistance(usize, usize),
    #[error("distance matrix has a nonzero diagonal entry at item {0}")]
    NonzeroDiagonal(usize),
    #[error("distance ({0}, {1}) is negative or not finite")]
    InvalidDistance(usize, usize),
    #[error("continuation probability of item {0} lies outside [0, 1]")]
    ProbabilityOutOfRange(usize),
    #[error("instance must contain at least one item")]
    EmptyInstance,
    #[error("invalid ordering: {0}")]
    InvalidOrdering(String),
    #[error("instance has no category sets")]
    MissingCategories,
    #[error("operation needs at least {min} items, instance has {n}")]
    TooFewItems { n: usize, min: usize },
    #[error("probability {0} is degenerate for the uniform surrogate (must lie in (0, 1))")]
    DegenerateProbability(f64),
    #[error("kappa {kappa} out of range for {n} items")]
    KappaOutOfRange { kappa: usize, n: usize },
    #[error("uniform mode requested but continuation probabilities differ")]
    NonUniformProbsInUniformMode,
    #[error("DPP kernel factorisation broke down at item {0}")]
    KernelBreakdown(usize),
    #[error("exhaustive oracle limited to 10 items, instance has {0}")]
    InstanceTooLarge(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("duplicate rating for user {user:?}, item {item:?}")]
    DuplicateRating { user: String, item: String },
    #[error("ratings table is empty")]
    EmptyTable,
    #[error("value range [{0}, {1}] is degenerate")]
    DegenerateRange(f64, f64),
    #[error("item {0} has an empty category set")]
    EmptyCategorySet(usize),
    #[error("item {0} has a zero-norm feature vector")]
    ZeroNormVector(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("user {user}: {source}")]
    ForUser {
        user: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
