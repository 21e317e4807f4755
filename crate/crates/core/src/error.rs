use std::io;

use thiserror::Error;

/// Errors produced anywhere in the processing chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid radar parameters: {0}")]
    InvalidParams(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown activity kind `{0}`")]
    UnknownActivity(String),

    #[error("unknown motion class `{0}`")]
    UnknownClass(String),

    #[error("range bins {r1}..={r2} out of bounds for {bins} bins")]
    RangeBinsOutOfBounds { r1: usize, r2: usize, bins: usize },

    #[error("sequence of {len} samples is shorter than the window length {window}")]
    SequenceTooShort { len: usize, window: usize },

    #[error("invalid STFT parameters: {0}")]
    InvalidStft(String),

    #[error("frequency band {lo}..{hi} Hz lies outside the Doppler span of +/-{span} Hz")]
    BandOutOfSpan { lo: f64, hi: f64, span: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("lines are parallel (slopes {0} and {1})")]
    NoIntersection(f64, f64),

    #[error("requested {d} components but images only have {eta} columns")]
    TooManyComponents { d: usize, eta: usize },

    #[error("projection basis is rank deficient")]
    RankDeficient,

    #[error("no training vectors are eligible for the requested class set")]
    EmptyClassSet,

    #[error("class {class} has no training samples")]
    MissingClass { class: String },

    #[error("decode inconsistency at segment {segment}: {reason}")]
    DecodeInconsistency { segment: usize, reason: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
