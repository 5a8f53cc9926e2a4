use thiserror::Error;

/// Errors surfaced by graph construction, estimation, and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is invalid: {0}")]
    InvalidGraph(String),

    #[error("unknown vertex id `{0}`")]
    UnknownVertex(String),

    #[error("unknown edge id `{0}`")]
    UnknownEdge(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("graph is disconnected or degenerate: {0}")]
    Disconnected(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("iteration did not converge after {iterations} steps (last delta {last_delta:.3e})")]
    NonConvergence { iterations: usize, last_delta: f64 },

    #[error("eigenvector has a zero component at vertex index {0}; phase undefined")]
    ZeroEigenvectorComponent(usize),

    #[error("enumeration limit exceeded: {0}")]
    TooLarge(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
