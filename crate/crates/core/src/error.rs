use thiserror::Error;

/// Errors raised by the whitening library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max |a - a^T| = {max_diff:e})")]
    Asymmetric { max_diff: f64 },

    #[error("jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("block accumulator is empty")]
    EmptyAccumulator,

    #[error("eigenvalue vector is empty or all zero")]
    ZeroSpectrum,

    #[error("signal rank {rank} outside [1, {dim}]")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("covariance matrix is all zero")]
    ZeroMatrix,

    #[error("aligned column average cancelled to zero")]
    DegenerateSubspace,

    #[error("mean power must be non-negative, got {0}")]
    NegativePower(f64),

    #[error("recursive Q drifted from T^T T by {deviation:e}")]
    StateCorruption { deviation: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("diagonal entry {index} is not positive")]
    ZeroDiagonal { index: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("data format: {0}")]
    DataFormat(String),

    #[error("layer {layer}, block {block}: {source}")]
    AtLayer {
        layer: usize,
        block: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves (divergence,
    /// drift, non-convergence) rather than by bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::StateCorruption { .. }
            | Error::NoConvergence { .. }
            | Error::Asymmetric { .. }
            | Error::NegativePower(_) => true,
            Error::AtLayer { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    pub(crate) fn at_layer(self, layer: usize, block: u64) -> Error {
        Error::AtLayer {
            layer,
            block,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(
    context: &'static str,
    expected: impl std::fmt::Display,
    got: impl std::fmt::Display,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
