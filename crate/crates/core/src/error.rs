use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid robot model: {0}")]
    Model(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("step context lacks `{0}` required by the reward spec")]
    MissingContext(&'static str),
    #[error("malformed trajectory log: {0}")]
    Log(String),
    #[error("infeasible rig plan: {0}")]
    InfeasiblePlan(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error("checkpoint incompatible: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
