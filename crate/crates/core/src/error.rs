//! Error type shared across the toolkit.

use std::error::Error;
use std::fmt;

pub type Result<T> = std::result::Result<T, CiaError>;

/// All failure modes surfaced by the core library.
#[derive(Debug)]
pub enum CiaError {
    /// Two tensors fed to `op` had incompatible shapes.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A single operand was unusable for `op` (wrong rank, empty, ...).
    BadOperand { op: &'static str, message: String },
    /// A class/token index fell outside the vocabulary.
    TargetOutOfRange { index: usize, vocab: usize },
    /// An operation that needs a scalar got a tensor of this shape.
    NotScalar { shape: Vec<usize> },
    /// A tensor id did not belong to the tape it was used with.
    UnknownTensor { id: usize },
    /// Invalid configuration value.
    Config(String),
    /// The assembled token sequence exceeds the model context window.
    SequenceTooLong { len: usize, max: usize },
    /// Text could not be tokenized.
    Tokenization(String),
    /// The attack loss left the finite range.
    NonFiniteLoss { iteration: usize },
    /// An evaluation was asked to run over zero prompts.
    EmptyPromptSet,
    /// A sweep cell failed; wraps the underlying error.
    SweepCell {
        alpha: f64,
        beta: f64,
        source: Box<CiaError>,
    },
    /// Filesystem-level failure.
    Io { path: String, message: String },
    /// A file existed but its contents did not match the expected format.
    Format { path: String, message: String },
}

impl fmt::Display for CiaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CiaError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            CiaError::BadOperand { op, message } => write!(f, "{op}: {message}"),
            CiaError::TargetOutOfRange { index, vocab } => {
                write!(f, "target index {index} out of range for vocabulary of {vocab}")
            }
            CiaError::NotScalar { shape } => {
                write!(f, "expected a scalar tensor, got shape {shape:?}")
            }
            CiaError::UnknownTensor { id } => write!(f, "tensor id {id} not found on this tape"),
            CiaError::Config(msg) => write!(f, "invalid configuration: {msg}"),
            CiaError::SequenceTooLong { len, max } => {
                write!(f, "token sequence of length {len} exceeds context window {max}")
            }
            CiaError::Tokenization(msg) => write!(f, "tokenization failed: {msg}"),
            CiaError::NonFiniteLoss { iteration } => {
                write!(f, "loss became non-finite at iteration {iteration}")
            }
            CiaError::EmptyPromptSet => write!(f, "prompt set is empty"),
            CiaError::SweepCell { alpha, beta, source } => {
                write!(f, "sweep cell (alpha={alpha}, beta={beta}) failed: {source}")
            }
            CiaError::Io { path, message } => write!(f, "io error on {path}: {message}"),
            CiaError::Format { path, message } => write!(f, "format error in {path}: {message}"),
        }
    }
}

impl Error for CiaError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            CiaError::SweepCell { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

impl CiaError {
    /// Helper for filesystem errors carrying the offending path.
    pub fn io(path: impl Into<String>, err: std::io::Error) -> Self {
        CiaError::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        CiaError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_mentions_operands() {
        let e = CiaError::ShapeMismatch {
            op: "matmul",
            lhs: vec![2, 3],
            rhs: vec![4, 5],
        };
        let s = e.to_string();
        assert!(s.contains("matmul"));
        assert!(s.contains("[2, 3]"));
    }

    #[test]
    fn sweep_cell_exposes_source() {
        let e = CiaError::SweepCell {
            alpha: 0.5,
            beta: 0.25,
            source: Box::new(CiaError::EmptyPromptSet),
        };
        assert!(e.source().is_some());
        assert!(e.to_string().contains("alpha=0.5"));
    }
}
