//! Dataset generation, LMCE-similarity clustering and the staged trainer.

mod cluster;
mod dataset;
mod evaluate;
mod sweep;
mod trainer;

pub use cluster::*;
pub use dataset::*;
pub use evaluate::*;
pub use sweep::*;
pub use trainer::*;

use thiserror::Error;

use crate::dispatch::DispatchError;
use crate::nn::{NetworkModel, NnError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sample {index}: no feasible load profile after {tries} draws: {source}")]
    Resample {
        index: usize,
        tries: usize,
        source: DispatchError,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot form {k} clusters from {loads} loads")]
    TooManyClusters { k: usize, loads: usize },
    #[error("training diverged in stage {stage} at epoch {epoch}")]
    Divergence {
        stage: usize,
        epoch: usize,
        /// Parameters at the end of the last finite epoch.
        last: Box<NetworkModel>,
    },
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
}
