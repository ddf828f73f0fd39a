use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("op `{op}` is not twice differentiable")]
    NotTwiceDifferentiable { op: &'static str },

    #[error("op `{op}` cannot be differentiated with respect to its {operand}")]
    NotDifferentiable { op: &'static str, operand: &'static str },

    #[error("loss must be a scalar, found shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("expected {expected} input tensors, got {found}")]
    InputCount { expected: usize, found: usize },

    #[error("invalid layer chain: {0}")]
    LayerChain(String),

    #[error("layer {layer} cannot be trimmed: {reason}")]
    NotTrimmable { layer: usize, reason: &'static str },

    #[error("quota {quota} for layer {layer} must be below its width {width}")]
    QuotaTooLarge { layer: usize, quota: usize, width: usize },

    #[error("rank {rank} outside 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("sparsity {0} is out of range")]
    SparsityOutOfRange(f64),

    #[error("final sparsity {end} is below initial sparsity {start}")]
    DecreasingSchedule { start: f64, end: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset size {0} is too small to split 80:10:10 (need at least 10)")]
    DatasetTooSmall(usize),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
