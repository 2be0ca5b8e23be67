use std::path::PathBuf;

use thiserror::Error;

use crate::vocab::TokenId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("context ends in eos; a terminal state has no successor")]
    TerminalContext,

    #[error("infinite NLL: token {token} at position {position} of sequence {sequence} has zero model probability")]
    InfiniteNll {
        sequence: usize,
        position: usize,
        token: TokenId,
    },

    #[error("infinite KL at step {step} (context {context:?}): model assigns zero probability to an oracle-supported token; enable a probability floor to continue")]
    InfiniteKl { step: usize, context: Vec<TokenId> },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown decoder spec `{input}`: {message}; valid forms are greedy, beam:k=<int>, temp:t=<float>, topk:k=<int>[,t=<float>], topp:p=<float>[,t=<float>]")]
    SpecParse { input: String, message: String },

    #[error("enumeration budget exceeded: {vocab}^{horizon} contexts exceeds cap {cap}")]
    BudgetExceeded {
        vocab: usize,
        horizon: usize,
        cap: u64,
    },

    #[error("{0}")]
    ZeroVariance(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("configuration invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error(transparent)]
    Bridge(#[from] crate::bridge::BridgeError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
