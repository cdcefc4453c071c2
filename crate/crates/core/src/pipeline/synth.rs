use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::relational::{Fact, KnowledgeBase};
use crate::tensor::{rng_from_seed, Rng, Tensor};

use super::{Dataset, LabeledPair, PipelineError};

/// Parameters of the procedural two-class, multi-enzyme dataset.
///
/// Every drug has a structural class (visible in its image and SMILES) and
/// one metabolising enzyme (visible only in the facts). A pair interacts iff
/// both drugs share the class and the enzyme, so no single modality
/// determines the label.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_drugs: usize,
    pub n_pairs: usize,
    pub n_enzymes: usize,
    /// Fraction of sampled pairs drawn from the interacting ones.
    pub positive_fraction: f64,
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_drugs: 200, n_pairs: 3000, n_enzymes: 3, positive_fraction: 0.3, image_size: 64, seed: 0 }
    }
}

/// Latent attributes of one generated drug.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthDrug {
    pub class: usize,
    pub enzyme: usize,
}

const CLASS_FRAGMENTS: [&[&str]; 2] = [
    &["c1ccccc1", "C(=O)NC", "CCN(CC)CC", "OC(=O)C", "c1ccncc1"],
    &["C(F)(F)F", "S(=O)(=O)N", "C#N", "ClC(Cl)", "N1CCOCC1"],
];
const SHARED_FRAGMENTS: [&str; 4] = ["CC", "O", "N", "CCC"];

pub fn drug_id(i: usize) -> String {
    format!("D{i:03}")
}

/// Generates the dataset and the latent attributes of each drug.
pub fn synthetic_dataset(config: &SynthConfig) -> Result<(Dataset, BTreeMap<String, SynthDrug>), PipelineError> {
    if config.n_drugs < 4 || config.n_enzymes == 0 || config.image_size < 16 {
        return Err(PipelineError::Config("synthetic dataset needs ≥ 4 drugs, ≥ 1 enzyme, images ≥ 16 px".into()));
    }
    let mut rng = rng_from_seed(config.seed);
    let mut drugs = BTreeMap::new();
    let mut images = BTreeMap::new();
    let mut smiles = BTreeMap::new();
    let mut kb = KnowledgeBase::new();
    for i in 0..config.n_drugs {
        let id = drug_id(i);
        let d = SynthDrug { class: i % 2, enzyme: rng.gen_range(0..config.n_enzymes) };
        images.insert(id.clone(), draw_image(d.class, config.image_size, &mut rng));
        smiles.insert(id.clone(), draw_smiles(d.class, &mut rng));
        kb.add_fact(&Fact::new("EnzymeInhibitor", id.clone(), format!("enz{}", d.enzyme)))?;
        kb.add_fact(&Fact::new("TargetAgonist", id.clone(), format!("tgt{}", rng.gen_range(0..4))))?;
        if rng.gen_bool(0.5) {
            kb.add_fact(&Fact::new("TransporterInducer", id.clone(), format!("tr{}", rng.gen_range(0..3))))?;
        }
        drugs.insert(id, d);
    }

    let ids: Vec<&String> = drugs.keys().collect();
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let (da, db) = (drugs[*a], drugs[*b]);
            if da == db {
                pos.push((*a, *b));
            } else {
                neg.push((*a, *b));
            }
        }
    }
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let n_pos = ((config.n_pairs as f64 * config.positive_fraction).round() as usize).min(pos.len());
    let n_neg = (config.n_pairs - n_pos.min(config.n_pairs)).min(neg.len());
    let mut pairs: Vec<LabeledPair> = pos[..n_pos]
        .iter()
        .map(|(a, b)| LabeledPair::canonical(*a, *b, true))
        .chain(neg[..n_neg].iter().map(|(a, b)| LabeledPair::canonical(*a, *b, false)))
        .collect();
    pairs.sort();
    let ds = Dataset::new(images, smiles, kb, pairs)?;
    Ok((ds, drugs))
}

/// Class 0 draws a filled disk, class 1 two to four horizontal bars; both
/// on a noisy background and quantized to 8 bits.
fn draw_image(class: usize, size: usize, rng: &mut Rng) -> Tensor {
    let s = size as f64;
    let fg = rng.gen_range(0.7..1.0);
    let mut shapes: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (cx, cy, r) = (rng.gen_range(0.35..0.65) * s, rng.gen_range(0.35..0.65) * s, rng.gen_range(0.15..0.25) * s);
    if class == 1 {
        let n: usize = rng.gen_range(2..=4);
        let x0 = rng.gen_range(0.05..0.3) * s;
        let x1 = rng.gen_range(0.7..0.95) * s;
        for k in 0..n {
            let y = (k as f64 + 0.5) / n as f64 * s + rng.gen_range(-0.04..0.04) * s;
            shapes.push((x0, x1, y - 0.04 * s, y + 0.04 * s));
        }
    }
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let inside = if class == 0 {
                (px - cx).powi(2) + (py - cy).powi(2) <= r * r
            } else {
                shapes.iter().any(|&(x0, x1, y0, y1)| px >= x0 && px <= x1 && py >= y0 && py <= y1)
            };
            let v: f64 = if inside { fg } else { 0.05 } + rng.gen_range(-0.05..0.05);
            data.push((v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
        }
    }
    Tensor::new(&[size, size], data).expect("size × size pixels")
}

fn draw_smiles(class: usize, rng: &mut Rng) -> String {
    let n = rng.gen_range(4..=6);
    let mut s = String::new();
    for k in 0..n {
        let pool: &[&str] = if k % 2 == 0 { CLASS_FRAGMENTS[class] } else { &SHARED_FRAGMENTS };
        s.push_str(pool.choose(rng).expect("non-empty pool"));
    }
    s
}

/// Drugs touched by `pairs`, for checks that only need the drug set.
pub fn drugs_of(pairs: &[LabeledPair]) -> BTreeSet<String> {
    pairs.iter().flat_map(|p| [p.drug_a.clone(), p.drug_b.clone()]).collect()
}
