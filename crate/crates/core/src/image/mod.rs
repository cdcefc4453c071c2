//! Siamese image embeddings for drug-structure pictures.
//!
//! Both sub-networks of the Siamese pair evaluate one [`SiameseModel`], so a
//! drug's embedding is a plain function of its image. Training minimises a
//! contrastive loss over labelled drug pairs; an optional spatial transformer
//! resamples each image before the tower.

mod config;
mod loss;
mod model;
mod stn;
mod train;

pub use config::{BlockShape, ShapeTrace, TowerConfig, EMBEDDING_DIM};
pub use loss::contrastive_loss;
pub use model::{build_tower, embed_image, Mode, SiameseModel};
pub use stn::{localiser_flatten_dim, stn_transform, AffineTheta};
pub use train::{train_siamese, train_siamese_with_history, ImagePair, SiameseHistory, SiameseTrainConfig};

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("invalid tower configuration at {layer}: {detail}")]
    Config { layer: String, detail: String },
    #[error("no image for drug `{0}`")]
    MissingImage(String),
    #[error("image has shape {got:?}, model expects {expected:?}")]
    WrongSize { expected: (usize, usize), got: Vec<usize> },
    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
