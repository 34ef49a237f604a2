use crate::sieve::SieveStats;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    /// An operation needed the planted shift but the instance was loaded blind.
    #[error("instance has no planted shift (loaded blind)")]
    MissingGroundTruth,

    #[error("circuit backend needs {qubits} qubits, cap is {cap}")]
    BackendTooLarge { qubits: usize, cap: usize },

    #[error("sieve exhausted its budget of {budget} fresh labels")]
    Exhausted { budget: u64, stats: Box<SieveStats> },

    #[error("label l={l} is not the target M/2={target}")]
    NotSievedToTarget { l: u64, target: u64 },

    #[error("register width mismatch: {0}")]
    WidthMismatch(String),

    #[error("unknown register {0:?}")]
    UnknownRegister(String),

    /// A runtime self-check failed (fidelity, uncomputation, norm, ...).
    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
