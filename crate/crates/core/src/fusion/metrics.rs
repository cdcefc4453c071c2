use super::{FusionError, Mlp};

/// Binary classification metrics with the positive class = interacts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Metrics {
    /// Precision (recall) is 0 when nothing is predicted (present) positive,
    /// and F1 is 0 when both are 0.
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { accuracy: ratio(tp + tn, tp + fp + tn + fn_), precision, recall, f1, tp, fp, tn, fn_ }
    }

    pub fn from_predictions(predicted: &[bool], actual: &[bool]) -> Result<Self, FusionError> {
        if predicted.len() != actual.len() {
            return Err(FusionError::Dimension(format!(
                "{} predictions, {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        if predicted.is_empty() {
            return Err(FusionError::Empty("test set"));
        }
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        Ok(Self::from_counts(tp, fp, tn, fn_))
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Predicts `interacts` where the classifier's probability is at least
/// `threshold` and scores the result against `labels`.
pub fn evaluate(model: &Mlp, features: &[Vec<f64>], labels: &[bool], threshold: f64) -> Result<Metrics, FusionError> {
    if features.is_empty() {
        return Err(FusionError::Empty("test set"));
    }
    let probs = model.predict_proba(features)?;
    let predicted: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    Metrics::from_predictions(&predicted, labels)
}
