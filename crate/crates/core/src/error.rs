use alloc::string::String;

use crate::Round;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("credit at round {round} does not follow the latest lot earned at round {latest}")]
    NonMonotoneRound { round: Round, latest: Round },

    #[error("negative token amount {0}")]
    NegativeAmount(f64),

    #[error("epsilon {eps} outside the permitted range [{lo}, {hi}]")]
    EpsilonOutOfRange { eps: f64, lo: f64, hi: f64 },

    #[error("invalid mechanism parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated IDX file: need {expected} bytes, have {found}")]
    Truncated { expected: usize, found: usize },

    #[error("IDX count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
}
