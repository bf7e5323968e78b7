use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("unsupported model kind for this operation: {0}")]
    UnsupportedModel(String),

    #[error("krum requires n - assumed_byz - 2 >= 1 (n = {n}, assumed_byz = {byz})")]
    KrumPrecondition { n: usize, byz: usize },

    #[error("run diverged at round {round}")]
    Diverged { round: usize },

    #[error("infeasible theory inputs: {0}")]
    Infeasible(String),

    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
