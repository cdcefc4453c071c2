use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use crate::tensor::{rng_from_seed, Adam, AdamConfig, Tape, Tensor};

use super::model::{is_trainable, Mode};
use super::{ImageError, SiameseModel, TowerConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SiameseTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub margin: f64,
    pub use_stn: bool,
    pub seed: u64,
    /// Pairs visited per epoch after shuffling; `None` visits all of them.
    pub pairs_per_epoch: Option<usize>,
}

impl Default for SiameseTrainConfig {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 32, lr: 5e-5, margin: 1.0, use_stn: false, seed: 0, pairs_per_epoch: None }
    }
}

/// One training pair: two drug IDs and whether they interact. Interacting
/// pairs are the "similar" pairs of the contrastive objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub a: String,
    pub b: String,
    pub interacts: bool,
}

#[derive(Debug, Clone)]
pub struct SiameseHistory {
    pub model: SiameseModel,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train_siamese(
    pairs: &[ImagePair],
    images: &BTreeMap<String, Tensor>,
    tower: &TowerConfig,
    config: &SiameseTrainConfig,
) -> Result<SiameseModel, ImageError> {
    train_siamese_with_history(pairs, images, tower, config).map(|h| h.model)
}

pub fn train_siamese_with_history(
    pairs: &[ImagePair],
    images: &BTreeMap<String, Tensor>,
    tower: &TowerConfig,
    config: &SiameseTrainConfig,
) -> Result<SiameseHistory, ImageError> {
    if config.margin <= 0.0 || config.batch_size == 0 {
        return Err(ImageError::InvalidArgument("margin and batch size must be positive".into()));
    }
    let (h, w) = tower.input_size;
    let mut batched: HashMap<&str, Tensor> = HashMap::new();
    for p in pairs {
        for id in [&p.a, &p.b] {
            if batched.contains_key(id.as_str()) {
                continue;
            }
            let img = images.get(id).ok_or_else(|| ImageError::MissingImage(id.clone()))?;
            if !matches!(img.shape(), [a, b] | [a, b, 1] if *a == h && *b == w) {
                return Err(ImageError::WrongSize { expected: (h, w), got: img.shape().to_vec() });
            }
            if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(ImageError::InvalidArgument(format!("image `{id}` is not normalized to [0, 1]")));
            }
            batched.insert(id, img.clone().reshape(&[h, w, 1])?);
        }
    }

    let mut model = SiameseModel::new(tower.clone(), config.use_stn, config.seed)?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = rng_from_seed(config.seed ^ 0x5eed_0001);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let take = config.pairs_per_epoch.unwrap_or(order.len()).min(order.len());
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order[..take].chunks(config.batch_size) {
            // unique drugs in first-appearance order
            let mut slot: HashMap<&str, usize> = HashMap::new();
            let mut ids: Vec<&str> = Vec::new();
            let (mut left, mut right, mut similar) = (Vec::new(), Vec::new(), Vec::new());
            for &i in chunk {
                let p = &pairs[i];
                for (id, side) in [(p.a.as_str(), &mut left), (p.b.as_str(), &mut right)] {
                    let next = ids.len();
                    let s = *slot.entry(id).or_insert_with(|| {
                        ids.push(id);
                        next
                    });
                    side.push(s);
                }
                similar.push(p.interacts);
            }
            if ids.len() < 2 {
                continue;
            }
            let imgs: Vec<&Tensor> = ids.iter().map(|id| &batched[id]).collect();
            let batch = Tensor::stack(&imgs)?;

            let mut tape = Tape::new();
            let params = model.params().bind(&mut tape, is_trainable);
            let x = tape.constant(batch);
            let (emb, stats) = model.forward(&mut tape, &params, x, Mode::Train)?;
            let e1 = tape.gather_rows(emb, &left)?;
            let e2 = tape.gather_rows(emb, &right)?;
            let loss = tape
                .contrastive_loss(e1, e2, &similar, config.margin)
                .map_err(|_| ImageError::NonFiniteLoss { step })?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(ImageError::NonFiniteLoss { step });
            }
            let grads = tape.backward(loss)?;
            adam.step(model.params_mut(), &params.gradients(&tape, &grads))?;
            model.update_running_stats(&stats)?;
            loss_sum += loss_value;
            batches += 1;
            step += 1;
        }
        epoch_losses.push(if batches == 0 { 0.0 } else { loss_sum / batches as f64 });
    }
    Ok(SiameseHistory { model, epoch_losses })
}
