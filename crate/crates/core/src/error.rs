use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} capacity exceeded: capacity {capacity}, requested {requested}")]
    CapacityExceeded {
        what: &'static str,
        capacity: usize,
        requested: usize,
    },

    #[error("invalid checkpoint: mark {mark} is past the live node count {live}")]
    InvalidCheckpoint { mark: usize, live: usize },

    #[error("invalid handle: node {index} is not live (live nodes: {live})")]
    InvalidHandle { index: usize, live: usize },

    #[error("domain error in {op}: input {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("scratch buffer `{buffer}` too small: required {required}, available {available}")]
    ScratchCapacity {
        buffer: &'static str,
        required: usize,
        available: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("byte {byte:#04x} is outside the vocabulary")]
    Tokenize { byte: u8 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
