use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtlabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("impossible alignment: {frames} frames cannot emit {labels} labels")]
    ImpossibleAlignment { frames: usize, labels: usize },
    #[error("ambiguous speaker order: both speakers start at frame {0}")]
    AmbiguousOrder(usize),
    #[error("invalid label sequence: {0}")]
    Label(String),
    #[error("delay {delay} frames is below the minimum offset of {offset} frames")]
    DelayBelowOffset { delay: usize, offset: usize },
    #[error("oracle size guard exceeded: T={frames}, U={labels} (limits T<=6, U<=4)")]
    OracleTooLarge { frames: usize, labels: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MtlabError>;
