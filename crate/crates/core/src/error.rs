use std::path::PathBuf;

use thiserror::Error;

/// Where a training run blew up.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub epoch: usize,
    pub block: (usize, usize),
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "non-finite value {} at entry (user {}, item {}) in block ({}, {}) during epoch {}",
            self.value, self.user, self.item, self.block.0, self.block.1, self.epoch
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {what} {index} >= {bound}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("duplicate rating for (user {user}, item {item})")]
    Duplicate { user: usize, item: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: rating {rating} outside declared scale [{min}, {max}]")]
    RatingOutOfScale {
        line: usize,
        rating: f64,
        min: f64,
        max: f64,
    },

    #[error("no ratings in {0}")]
    EmptyInput(String),

    #[error("split leaves the {0} fold empty")]
    EmptyFold(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no test entries left to score")]
    EmptyScoredSet,

    #[error("training diverged: {0}")]
    Diverged(Box<Divergence>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
