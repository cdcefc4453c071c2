use std::collections::BTreeMap;

use crate::fusion::Prediction;
use crate::tensor::Tensor;

use super::{lookup, BaselineError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    /// `(0.01·L)²` and `(0.03·L)²` for dynamic range `L = 1`.
    fn default() -> Self {
        Self { c1: 0.01 * 0.01, c2: 0.03 * 0.03 }
    }
}

/// Whole-image (single window) structural similarity with population
/// statistics.
pub fn ssim(x1: &Tensor, x2: &Tensor, params: SsimParams) -> Result<f64, BaselineError> {
    if !(params.c1 > 0.0 && params.c2 > 0.0) {
        return Err(BaselineError::InvalidArgument("SSIM constants must be positive".into()));
    }
    if x1.shape() != x2.shape() {
        return Err(BaselineError::ShapeMismatch(x1.shape().to_vec(), x2.shape().to_vec()));
    }
    let (a, b) = (x1.data(), x2.data());
    if a.iter().chain(b).any(|v| !(0.0..=1.0).contains(v)) {
        return Err(BaselineError::InvalidArgument("SSIM inputs must lie in [0, 1]".into()));
    }
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let cov = |u: &[f64], mu_u: f64, v: &[f64], mu_v: f64| {
        u.iter().zip(v).map(|(x, y)| (x - mu_u) * (y - mu_v)).sum::<f64>() / n
    };
    let var_a = cov(a, mu_a, a, mu_a);
    let var_b = cov(b, mu_b, b, mu_b);
    let cov_ab = cov(a, mu_a, b, mu_b);
    let num = (2.0 * mu_a * mu_b + params.c1) * (2.0 * cov_ab + params.c2);
    let den = (mu_a * mu_a + mu_b * mu_b + params.c1) * (var_a + var_b + params.c2);
    Ok(num / den)
}

/// Predicts an interaction when a pair's SSIM is at least the mean SSIM over
/// all pairs given.
pub fn ssim_classify(
    pairs: &[(String, String)],
    images: &BTreeMap<String, Tensor>,
    params: SsimParams,
) -> Result<Vec<Prediction>, BaselineError> {
    if pairs.is_empty() {
        return Err(BaselineError::NoPairs);
    }
    let scores = pairs
        .iter()
        .map(|(a, b)| ssim(lookup(images, a)?, lookup(images, b)?, params))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(super::threshold_at_mean(pairs, &scores))
}
