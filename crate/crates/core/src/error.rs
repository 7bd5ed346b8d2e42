//! Error type shared by the whole crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Errors produced by tensor kernels, the text pipeline, logical-form
/// handling, the model and the training loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not conform; names the operation and both operands.
    Dimension { op: &'static str, detail: String },
    /// Invalid configuration value (bad rate, empty data set, ...).
    Config(String),
    /// Index outside a valid range.
    Index { index: usize, len: usize },
    /// Logical-form text could not be parsed; `position` is a byte offset
    /// (string entry points) or token offset (token-stream entry points).
    Parse { position: usize, message: String },
    /// Malformed tree linearization (dangling `<n>`, orphan sequence, depth cap).
    Structure(String),
    /// Token or token index outside the vocabulary.
    Vocabulary(String),
    /// Invalid model input (e.g. empty utterance).
    Input(String),
    /// A logical constant maps to more than one argument marker.
    Ambiguity { constant: String, candidates: Vec<String> },
    /// Training failed; `batch` is the index of the offending mini-batch.
    Training { batch: usize, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, detail } => write!(f, "dimension error in {op}: {detail}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Index { index, len } => write!(f, "index {index} out of range for length {len}"),
            Error::Parse { position, message } => {
                write!(f, "parse error at byte {position}: {message}")
            }
            Error::Structure(msg) => write!(f, "structure error: {msg}"),
            Error::Vocabulary(msg) => write!(f, "vocabulary error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Ambiguity { constant, candidates } => write!(
                f,
                "ambiguous constant {constant:?}: matches markers {candidates:?}"
            ),
            Error::Training { batch, message } => {
                write!(f, "training error in batch {batch}: {message}")
            }
        }
    }
}

impl core::error::Error for Error {}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;
