use thiserror::Error;

/// Crate-wide error type. The CLI maps these onto exit codes, so variants are
/// grouped by what went wrong (bad configuration, bad data, runtime failure)
/// rather than by module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown word {word:?} at position {position}: not in the canonical vocabulary and not punctuation")]
    UnknownWord { word: String, position: usize },

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("vocabulary target size {target} too small: need at least {minimum} (specials + alphabet)")]
    TargetTooSmall { target: usize, minimum: usize },

    #[error("dangling continuation unit {unit:?} at token {index}: no word-initial unit precedes it")]
    DanglingContinuation { unit: String, index: usize },

    #[error("invalid rule pattern {pattern:?}: {reason}")]
    InvalidPattern { pattern: String, reason: String },

    #[error("rule target {word:?} needs {needed} tokens but the word span only has {available}")]
    SpanOverflow {
        word: String,
        needed: usize,
        available: usize,
    },

    #[error("word pair needs {needed} mask tokens in one span but max_n_mask is {max_n_mask}")]
    MaskOverflow { needed: usize, max_n_mask: usize },

    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("soft label row {row} sums to {sum:.9}, expected 1 within 1e-6")]
    InvalidSoftLabel { row: usize, sum: f64 },

    #[error("sample of {requested} items exceeds population of {population}")]
    SampleTooLarge {
        requested: usize,
        population: usize,
    },

    #[error("length mismatch in {context}: source {source_len}, target {target_len}, predicted {predicted_len}")]
    LengthMismatch {
        context: &'static str,
        source_len: usize,
        target_len: usize,
        predicted_len: usize,
    },

    #[error("rows disagree at line {line}: {reason}")]
    RowMismatch { line: usize, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code class used by the CLI: 1 = configuration, 2 = data,
    /// 3 = runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::TargetTooSmall { .. } | Error::InvalidPattern { .. } => 1,
            Error::UnknownWord { .. }
            | Error::EmptyDataset(_)
            | Error::DanglingContinuation { .. }
            | Error::SpanOverflow { .. }
            | Error::MaskOverflow { .. }
            | Error::InvalidSoftLabel { .. }
            | Error::SampleTooLarge { .. }
            | Error::LengthMismatch { .. }
            | Error::RowMismatch { .. }
            | Error::Data(_)
            | Error::Json(_) => 2,
            Error::SequenceTooLong { .. } | Error::Checkpoint(_) | Error::Io(_) => 3,
        }
    }
}
