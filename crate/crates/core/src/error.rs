use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("key space exhausted: cannot place {n} distinct keys in [0, {max}]")]
    KeySpaceExhausted { n: usize, max: u64 },
    #[error("sample larger than population: K = {k}, N = {n}")]
    SampleTooLarge { k: usize, n: usize },
    #[error("sketch length mismatch: {0} vs {1}")]
    SketchLengthMismatch(usize, usize),
    #[error("every tuning candidate failed to train")]
    AllCandidatesFailed,
    #[error("malformed index blob: {0}")]
    Format(String),
    #[error("cache manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}
