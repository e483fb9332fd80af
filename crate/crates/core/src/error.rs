use alloc::string::String;
use alloc::vec::Vec;

/// Errors surfaced by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("{op} received an all-zero mask")]
    EmptyMask { op: &'static str },

    #[error("log of non-positive value {value}")]
    LogDomain { value: f64 },

    #[error("non-positive depth {value}")]
    NonPositiveDepth { value: f64 },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("graph already consumed by a backward pass")]
    GraphConsumed,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient for parameter {name}")]
    NonFiniteGradient { name: String },

    #[error("non-finite loss {name} at step {step}")]
    NonFiniteLoss { name: &'static str, step: u64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
