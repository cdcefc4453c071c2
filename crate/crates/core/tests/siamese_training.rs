use std::collections::BTreeMap;

use hetddi::baselines::euclidean;
use hetddi::image::{train_siamese, train_siamese_with_history, ImageError, ImagePair, SiameseModel, SiameseTrainConfig, TowerConfig};
use hetddi::pipeline::{synthetic_dataset, SynthConfig};
use hetddi::tensor::Tensor;

fn data() -> (BTreeMap<String, Tensor>, Vec<ImagePair>) {
    let (ds, _) = synthetic_dataset(&SynthConfig { n_drugs: 24, n_pairs: 120, seed: 4, ..SynthConfig::default() }).unwrap();
    let pairs = ds.pairs.iter().map(|p| ImagePair { a: p.drug_a.clone(), b: p.drug_b.clone(), interacts: p.label }).collect();
    (ds.images, pairs)
}

fn cfg(epochs: usize) -> SiameseTrainConfig {
    SiameseTrainConfig { epochs, lr: 1e-3, batch_size: 16, seed: 3, ..SiameseTrainConfig::default() }
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let (images, pairs) = data();
    let trained = train_siamese(&pairs, &images, &TowerConfig::desk(), &cfg(0)).unwrap();
    let init = SiameseModel::new(TowerConfig::desk(), false, 3).unwrap();
    assert_eq!(trained.params(), init.params());
}

#[test]
fn training_is_deterministic_and_loss_drops() {
    let (images, pairs) = data();
    let a = train_siamese_with_history(&pairs, &images, &TowerConfig::desk(), &cfg(4)).unwrap();
    let b = train_siamese_with_history(&pairs, &images, &TowerConfig::desk(), &cfg(4)).unwrap();
    assert_eq!(a.model.params(), b.model.params());
    assert_eq!(a.epoch_losses, b.epoch_losses);
    assert!(a.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(a.epoch_losses.last() < a.epoch_losses.first(), "{:?}", a.epoch_losses);
}

#[test]
fn trained_embeddings_pull_interacting_pairs_together() {
    let (images, pairs) = data();
    let model = train_siamese(&pairs, &images, &TowerConfig::desk(), &cfg(6)).unwrap();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for p in &pairs {
        let e = model.embed_batch(&[&images[&p.a], &images[&p.b]]).unwrap();
        let d = euclidean(&e[0], &e[1]);
        if p.interacts { pos.push(d) } else { neg.push(d) }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&pos) < mean(&neg), "interacting {} vs other {}", mean(&pos), mean(&neg));
}

#[test]
fn missing_and_misshapen_images_are_rejected() {
    let (mut images, pairs) = data();
    let first = pairs[0].a.clone();
    images.insert(first.clone(), Tensor::zeros(&[32, 32]));
    assert!(matches!(train_siamese(&pairs, &images, &TowerConfig::desk(), &cfg(1)), Err(ImageError::WrongSize { .. })));
    images.remove(&first);
    assert!(matches!(train_siamese(&pairs, &images, &TowerConfig::desk(), &cfg(1)), Err(ImageError::MissingImage(id)) if id == first));
}
