use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{0}")]
    Index(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Range(String),

    #[error("{0}")]
    Consistency(String),

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("model structure: {0}")]
    Structure(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("training diverged in phase {phase} at epoch {epoch}: non-finite loss")]
    Training { phase: String, epoch: usize },

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("sample size: {0}")]
    SampleSize(String),

    #[error("aggregation: {0}")]
    Aggregation(String),

    #[error("non-finite objective value during {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
