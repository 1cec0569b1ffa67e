use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate index {index} out of range for {len} coordinates")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("alpha must be positive and finite, got {0}")]
    NonPositiveAlpha(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid loss parameters: {0}")]
    InvalidLoss(String),

    #[error("invalid label {label} at coordinate {index}: {kind} requires labels in {{-1, +1}}")]
    InvalidLabel {
        index: usize,
        label: f64,
        kind: &'static str,
    },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel matrix is not symmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("kernel matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("dense {dim}x{dim} matrix needs {required} bytes, budget is {budget} bytes")]
    MemoryBudget {
        dim: usize,
        required: usize,
        budget: usize,
    },

    #[error("eigendecomposition of a {dim}x{dim} matrix exceeds the cap of {cap}")]
    EigenBudget { dim: usize, cap: usize },

    #[error("the frobenius alpha rule requires a factored (linear) Gram operator")]
    FrobeniusOnDense,

    #[error("kernel matrix is null (zero trace)")]
    NullKernel,

    #[error("alpha = {alpha} violates 0 < alpha < 2/||K||_2 = {bound}")]
    AlphaOutOfRange { alpha: f64, bound: f64 },

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
