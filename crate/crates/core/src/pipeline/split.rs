use rand::seq::SliceRandom;

use crate::tensor::rng_from_seed;

use super::{LabeledPair, PipelineError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// Stratified split: each class is shuffled independently and
/// `round(ratio · n_class)` of it (at least one, at most `n_class − 1`) goes
/// to the training side. Both sides keep the input order.
pub fn split(pairs: &[LabeledPair], ratio: f64, seed: u64) -> Result<Split, PipelineError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PipelineError::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut in_train = vec![false; pairs.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label == class).collect();
        if idx.len() < 2 {
            return Err(PipelineError::Split(format!(
                "class {} has {} pair(s); stratification needs at least 2",
                u8::from(class),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((ratio * idx.len() as f64).round() as usize).clamp(1, idx.len() - 1);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = pairs.iter().zip(&in_train).partition(|(_, &t)| t);
    Ok(Split { train: train.into_iter().map(|(p, _)| p.clone()).collect(), test: test.into_iter().map(|(p, _)| p.clone()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::class_counts;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn pairs(pos: usize, neg: usize) -> Vec<LabeledPair> {
        (0..pos + neg).map(|i| LabeledPair::canonical(format!("d{i:04}"), format!("e{i:04}"), i < pos)).collect()
    }

    #[test]
    fn exact_stratification() {
        let s = split(&pairs(100, 100), 0.8, 1).unwrap();
        assert_eq!(class_counts(&s.train), (80, 80));
        assert_eq!(class_counts(&s.test), (20, 20));
    }

    #[test]
    fn deterministic_under_seed() {
        let p = pairs(37, 91);
        assert_eq!(split(&p, 0.8, 9).unwrap(), split(&p, 0.8, 9).unwrap());
        assert_ne!(split(&p, 0.8, 9).unwrap(), split(&p, 0.8, 10).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(split(&pairs(10, 10), 1.0, 0).is_err());
        assert!(split(&pairs(10, 10), 0.0, 0).is_err());
        assert!(matches!(split(&pairs(1, 10), 0.5, 0), Err(PipelineError::Split(_))));
    }

    proptest! {
        #[test]
        fn disjoint_complete_and_stratified(pos in 500usize..2000, neg in 500usize..2000, ratio in 0.5f64..0.9, seed in any::<u64>()) {
            let p = pairs(pos, neg);
            let s = split(&p, ratio, seed).unwrap();
            let train: BTreeSet<_> = s.train.iter().map(LabeledPair::key).collect();
            let test: BTreeSet<_> = s.test.iter().map(LabeledPair::key).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(train.len() + test.len(), p.len());
            let global = pos as f64 / p.len() as f64;
            for side in [&s.train, &s.test] {
                let (sp, _) = class_counts(side);
                prop_assert!((sp as f64 / side.len() as f64 - global).abs() <= 0.01);
            }
        }
    }
}
