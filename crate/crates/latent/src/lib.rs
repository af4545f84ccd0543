//! Toy-scale latent video generation conditioned on lighting proxies: a fixed
//! linear patch codec, a convolutional proxy encoder injected as a scaled
//! residual, a small flow-matching denoiser with low-rank adapters, and a
//! staged training schedule. Gradients are hand-derived.

pub mod checkpoint;
pub mod codec;
pub mod data;
pub mod flow;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("t = {0} is outside [0, 1]")]
    BadT(f64),
    #[error("time grid must have at least two increasing points")]
    BadGrid,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("stage C needs both data sources")]
    MissingSource,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LatentError>;

pub use model::{inject_residual, ToyModel};
pub use tensor::{ConditionFeatures, Fmap, LatentTensor};
