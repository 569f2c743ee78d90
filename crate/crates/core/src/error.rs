use alloc::string::String;

/// Errors produced by the analysis primitives.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("input is empty")]
    Empty,
    #[error("input too short: need {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("corner frequency {corner} Hz is not below Nyquist ({nyquist} Hz)")]
    CornerAboveNyquist { corner: f64, nyquist: f64 },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("duplicate stream id `{0}`")]
    DuplicateStream(String),
    #[error("unknown stream `{0}`")]
    UnknownStream(String),
    #[error("stream `{stream}` has {expected} channels, sample carries {got}")]
    Arity {
        stream: String,
        expected: usize,
        got: usize,
    },
    #[error("stream `{stream}` does not cover [{t0}, {t1}]")]
    Gap { stream: String, t0: f64, t1: f64 },
    #[error("missing calibration: {0}")]
    MissingCalibration(String),
    #[error("unknown proposal `{0}`")]
    UnknownProposal(String),
    #[error("proposal `{0}` is no longer pending")]
    AlreadyDecided(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn degenerate(msg: impl Into<String>) -> Error {
    Error::Degenerate(msg.into())
}
