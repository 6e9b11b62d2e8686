use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input corpus")]
    EmptyCorpus,

    #[error("mismatched line counts: {src} source lines vs {tgt} target lines")]
    LineCountMismatch { src: usize, tgt: usize },

    #[error("empty {side} sentence at line {line}")]
    EmptySentence { side: &'static str, line: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("malformed input at line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("alignment link ({src}, {tgt}) out of range for sentence pair {pair} of lengths ({src_len}, {tgt_len})")]
    LinkOutOfRange {
        pair: usize,
        src: usize,
        tgt: usize,
        src_len: usize,
        tgt_len: usize,
    },

    #[error("target word `{0}` has single-class training data")]
    SingleClass(String),

    #[error("subset size {size} exceeds vocabulary size {vocab}")]
    SubsetTooLarge { size: usize, vocab: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable kind, used by the command-line front-end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyCorpus => "empty_corpus",
            Error::LineCountMismatch { .. } => "line_count_mismatch",
            Error::EmptySentence { .. } => "empty_sentence",
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Malformed { .. } => "malformed_input",
            Error::LinkOutOfRange { .. } => "link_out_of_range",
            Error::SingleClass(_) => "single_class",
            Error::SubsetTooLarge { .. } => "subset_too_large",
            Error::Format(_) => "bad_format",
            Error::Io(e) if e.kind() == io::ErrorKind::NotFound => "missing_file",
            Error::Io(_) => "io",
        }
    }
}
