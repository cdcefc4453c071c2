//! Single-modality baselines: SSIM thresholding, autoencoder code similarity
//! and Siamese embedding distance.

mod autoencoder;
mod ssim;

pub use autoencoder::{
    autoencoder_baseline, autoencoder_classify, bce_similarity, cosine_similarity, train_autoencoder, AeCriterion,
    Autoencoder, AutoencoderConfig,
};
pub use ssim::{ssim, ssim_classify, SsimParams};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::fusion::Prediction;
use crate::image::{ImageError, SiameseModel};
use crate::tensor::{Tensor, TensorError};

/// Distance threshold of the Siamese baseline.
pub const SIAMESE_THRESHOLD: f64 = 0.65;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("no image for drug `{0}`")]
    MissingImage(String),
    #[error("no pairs to classify")]
    NoPairs,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn lookup<'a>(images: &'a BTreeMap<String, Tensor>, id: &str) -> Result<&'a Tensor, BaselineError> {
    images.get(id).ok_or_else(|| BaselineError::MissingImage(id.to_string()))
}

/// `score ≥ mean(scores)` ⇒ interacts.
fn threshold_at_mean(pairs: &[(String, String)], scores: &[f64]) -> Vec<Prediction> {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    pairs
        .iter()
        .zip(scores)
        .map(|((a, b), &s)| Prediction { drug_a: a.clone(), drug_b: b.clone(), score: s, interacts: s >= mean })
        .collect()
}

/// Which side of the distance threshold counts as an interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceRule {
    /// `distance ≥ threshold` ⇒ interacts.
    #[default]
    AtLeast,
    /// `distance < threshold` ⇒ interacts, matching a model trained with
    /// interacting pairs as the similar class.
    Below,
}

/// Euclidean distance between the Siamese embeddings of each pair,
/// thresholded per `rule`.
pub fn siamese_distance_classify(
    model: &SiameseModel,
    pairs: &[(String, String)],
    images: &BTreeMap<String, Tensor>,
    threshold: f64,
    rule: DistanceRule,
) -> Result<Vec<Prediction>, BaselineError> {
    let mut ids: Vec<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    ids.sort_unstable();
    ids.dedup();
    let imgs = ids.iter().map(|id| lookup(images, id)).collect::<Result<Vec<_>, _>>()?;
    let emb: BTreeMap<&str, Vec<f64>> = ids.iter().copied().zip(model.embed_batch(&imgs)?).collect();
    Ok(pairs
        .iter()
        .map(|(a, b)| {
            let d = euclidean(&emb[a.as_str()], &emb[b.as_str()]);
            let interacts = match rule {
                DistanceRule::AtLeast => d >= threshold,
                DistanceRule::Below => d < threshold,
            };
            Prediction { drug_a: a.clone(), drug_b: b.clone(), score: d, interacts }
        })
        .collect())
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
