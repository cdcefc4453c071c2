//! Pair features from the three modalities and the MLP interaction classifier.
//!
//! Image and SMILES embeddings of a canonically ordered pair are each reduced
//! to one vector by [`aggregate_pair`], the two results are averaged, and the
//! relational grounding counts are appended.

mod metrics;
mod mlp;

pub use metrics::{evaluate, Metrics};
pub use mlp::{train_classifier, train_classifier_with_history, ClassifierConfig, ClassifierHistory, Mlp};

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("training set has a single class")]
    SingleClass,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("invalid classifier setting: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// How two per-drug embeddings become one pair vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AggMode {
    /// `e_a − e_b` on the canonically ordered pair.
    #[default]
    Sub,
    /// `(e_a + e_b) / 2`.
    Avg,
    /// `|e_a − e_b|`, symmetric in the pair.
    AbsDiff,
}

impl fmt::Display for AggMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggMode::Sub => "sub",
            AggMode::Avg => "avg",
            AggMode::AbsDiff => "absdiff",
        })
    }
}

impl FromStr for AggMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sub" => Ok(AggMode::Sub),
            "avg" => Ok(AggMode::Avg),
            "absdiff" => Ok(AggMode::AbsDiff),
            other => Err(format!("unknown aggregation `{other}` (expected sub, avg or absdiff)")),
        }
    }
}

pub fn aggregate_pair(e_a: &[f64], e_b: &[f64], mode: AggMode) -> Result<Vec<f64>, FusionError> {
    if e_a.len() != e_b.len() {
        return Err(FusionError::Dimension(format!("aggregate: {} vs {}", e_a.len(), e_b.len())));
    }
    let f = match mode {
        AggMode::Sub => |a: f64, b: f64| a - b,
        AggMode::Avg => |a: f64, b: f64| (a + b) / 2.0,
        AggMode::AbsDiff => |a: f64, b: f64| (a - b).abs(),
    };
    Ok(e_a.iter().zip(e_b).map(|(&a, &b)| f(a, b)).collect())
}

/// `concat(mean(img_diff, smiles_diff), rel_counts)`.
pub fn fuse(img_diff: &[f64], smiles_diff: &[f64], rel_counts: &[f64]) -> Result<Vec<f64>, FusionError> {
    fuse_available(Some(img_diff), Some(smiles_diff), Some(rel_counts))
}

/// [`fuse`] over whichever modalities are present: the dense part is the mean
/// of the present image/SMILES vectors, followed by the relational counts.
pub fn fuse_available(
    img_diff: Option<&[f64]>,
    smiles_diff: Option<&[f64]>,
    rel_counts: Option<&[f64]>,
) -> Result<Vec<f64>, FusionError> {
    let dense: Vec<&[f64]> = [img_diff, smiles_diff].into_iter().flatten().collect();
    let mut out = match dense.as_slice() {
        [] => Vec::new(),
        [one] => one.to_vec(),
        [a, b] => {
            if a.len() != b.len() {
                return Err(FusionError::Dimension(format!("fuse: image {} vs SMILES {}", a.len(), b.len())));
            }
            a.iter().zip(b.iter()).map(|(x, y)| (x + y) / 2.0).collect()
        }
        _ => unreachable!(),
    };
    if let Some(r) = rel_counts {
        out.extend_from_slice(r);
    }
    if out.is_empty() {
        return Err(FusionError::Empty("feature vector: no modality selected"));
    }
    Ok(out)
}

/// Features of one canonical pair (`drug_a < drug_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeature {
    pub drug_a: String,
    pub drug_b: String,
    pub img_diff: Option<Vec<f64>>,
    pub smiles_diff: Option<Vec<f64>>,
    pub rel_counts: Option<Vec<f64>>,
    pub fused: Vec<f64>,
}

impl PairFeature {
    pub fn new(
        drug_a: impl Into<String>,
        drug_b: impl Into<String>,
        img_diff: Option<Vec<f64>>,
        smiles_diff: Option<Vec<f64>>,
        rel_counts: Option<Vec<f64>>,
    ) -> Result<Self, FusionError> {
        let fused = fuse_available(img_diff.as_deref(), smiles_diff.as_deref(), rel_counts.as_deref())?;
        Ok(Self { drug_a: drug_a.into(), drug_b: drug_b.into(), img_diff, smiles_diff, rel_counts, fused })
    }

    pub fn rel_len(&self) -> usize {
        self.rel_counts.as_ref().map_or(0, Vec::len)
    }
}

/// CSV with header `drug_a,drug_b,fused_0..,rel_0..,label`; the `fused_*`
/// columns are the dense part of the fused vector and `rel_*` the counts.
pub fn feature_csv(features: &[PairFeature], labels: &[bool]) -> Result<String, FusionError> {
    if features.len() != labels.len() {
        return Err(FusionError::Dimension(format!("{} features, {} labels", features.len(), labels.len())));
    }
    let Some(first) = features.first() else { return Err(FusionError::Empty("feature set")) };
    let (width, r) = (first.fused.len(), first.rel_len());
    let mut out = String::from("drug_a,drug_b");
    for i in 0..width - r {
        write!(out, ",fused_{i}").expect("write to string");
    }
    for i in 0..r {
        write!(out, ",rel_{i}").expect("write to string");
    }
    out.push_str(",label\n");
    for (f, &y) in features.iter().zip(labels) {
        if f.fused.len() != width || f.rel_len() != r {
            return Err(FusionError::Dimension(format!("pair ({}, {}) has a different layout", f.drug_a, f.drug_b)));
        }
        write!(out, "{},{}", f.drug_a, f.drug_b).expect("write to string");
        for v in &f.fused {
            write!(out, ",{v}").expect("write to string");
        }
        writeln!(out, ",{}", u8::from(y)).expect("write to string");
    }
    Ok(out)
}

/// One scored pair, shared by the fused model and the baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub drug_a: String,
    pub drug_b: String,
    pub score: f64,
    pub interacts: bool,
}

pub fn predictions_csv(preds: &[Prediction]) -> String {
    let mut out = String::from("drug_a,drug_b,score,prediction\n");
    for p in preds {
        writeln!(out, "{},{},{},{}", p.drug_a, p.drug_b, p.score, u8::from(p.interacts)).expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregation_examples() {
        let x = [0.3, -1.0, 2.5];
        assert_eq!(aggregate_pair(&x, &x, AggMode::Sub).unwrap(), vec![0.0; 3]);
        assert_eq!(aggregate_pair(&x, &x, AggMode::Avg).unwrap(), x.to_vec());
        assert_eq!(aggregate_pair(&[1.0, 2.0], &[0.5, 1.0], AggMode::Sub).unwrap(), vec![0.5, 1.0]);
        assert_eq!(aggregate_pair(&[1.0], &[3.0], AggMode::AbsDiff).unwrap(), vec![2.0]);
        assert!(aggregate_pair(&[1.0], &[1.0, 2.0], AggMode::Sub).is_err());
    }

    #[test]
    fn fused_width_is_dense_plus_rules() {
        let v = vec![0.25; 100];
        let fused = fuse(&v, &v, &[0.0; 19]).unwrap();
        assert_eq!(fused.len(), 119);
        assert_eq!(&fused[..100], v.as_slice());
        assert!(fused[100..].iter().all(|&x| x == 0.0));
        assert!(fuse(&v, &v[..99], &[]).is_err());
    }

    #[test]
    fn partial_modalities() {
        let img = [1.0, 3.0];
        assert_eq!(fuse_available(Some(&img), None, Some(&[5.0])).unwrap(), vec![1.0, 3.0, 5.0]);
        assert_eq!(fuse_available(None, None, Some(&[5.0, 0.0])).unwrap(), vec![5.0, 0.0]);
        assert!(fuse_available(None, None, None).is_err());
    }

    #[test]
    fn agg_mode_parses() {
        for m in [AggMode::Sub, AggMode::Avg, AggMode::AbsDiff] {
            assert_eq!(m.to_string().parse::<AggMode>().unwrap(), m);
        }
        assert!("mul".parse::<AggMode>().is_err());
    }

    #[test]
    fn feature_csv_layout() {
        let f = PairFeature::new("a", "b", Some(vec![1.0, 2.0]), Some(vec![3.0, 4.0]), Some(vec![7.0])).unwrap();
        let csv = feature_csv(&[f], &[true]).unwrap();
        assert_eq!(csv, "drug_a,drug_b,fused_0,fused_1,rel_0,label\na,b,2,3,7,1\n");
    }

    #[test]
    fn prediction_csv_layout() {
        let p = Prediction { drug_a: "a".into(), drug_b: "b".into(), score: 0.75, interacts: true };
        assert_eq!(predictions_csv(&[p]), "drug_a,drug_b,score,prediction\na,b,0.75,1\n");
    }

    proptest! {
        #[test]
        fn sub_is_antisymmetric(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let ab = aggregate_pair(&a, &b, AggMode::Sub).unwrap();
            let ba = aggregate_pair(&b, &a, AggMode::Sub).unwrap();
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert_eq!(*x, -*y);
            }
        }

        #[test]
        fn fused_length_law(r in 0usize..30) {
            let v = vec![0.5; 100];
            prop_assert_eq!(fuse(&v, &v, &vec![1.0; r]).unwrap().len(), 100 + r);
        }
    }
}
