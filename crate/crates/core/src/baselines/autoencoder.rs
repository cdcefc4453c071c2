use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::fusion::Prediction;
use crate::tensor::{glorot_uniform, rng_from_seed, Activation, Adam, AdamConfig, ParamStore, Tape, Tensor, Var};

use super::{lookup, BaselineError};

/// Pair similarity computed from the two bottleneck codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeCriterion {
    /// Negated binary cross-entropy between the codes, symmetrised.
    Bce,
    /// Cosine of the angle between the codes.
    Cosine,
}

impl fmt::Display for AeCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AeCriterion::Bce => "bce",
            AeCriterion::Cosine => "cosine",
        })
    }
}

impl FromStr for AeCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bce" => Ok(AeCriterion::Bce),
            "cosine" => Ok(AeCriterion::Cosine),
            other => Err(format!("unknown criterion `{other}` (expected bce or cosine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    pub input_size: (usize, usize),
    /// Encoder conv widths; each conv (3×3, padding 1) is followed by a 2×2 pool.
    pub filters: Vec<usize>,
    pub bottleneck: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self { input_size: (64, 64), filters: vec![8, 16, 16], bottleneck: 64, epochs: 10, batch_size: 16, lr: 1e-3, seed: 0 }
    }
}

/// Conv encoder to a sigmoid bottleneck and a mirrored upsampling decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    config: AutoencoderConfig,
    params: ParamStore,
    /// Spatial extent and channels entering the bottleneck.
    inner: (usize, usize, usize),
}

impl Autoencoder {
    pub fn new(config: AutoencoderConfig) -> Result<Self, BaselineError> {
        let (h, w) = config.input_size;
        let levels = config.filters.len();
        let factor = 1usize << levels;
        if levels == 0 || h % factor != 0 || w % factor != 0 || h < factor || w < factor || config.bottleneck == 0 {
            return Err(BaselineError::InvalidArgument(format!(
                "autoencoder input {h}x{w} must be a positive multiple of {factor}"
            )));
        }
        let mut rng = rng_from_seed(config.seed);
        let mut params = ParamStore::new();
        let mut conv = |params: &mut ParamStore, name: String, c_in: usize, c_out: usize| {
            params.insert(format!("{name}.k"), glorot_uniform(&[3, 3, c_in, c_out], 9 * c_in, 9 * c_out, &mut rng));
            params.insert(format!("{name}.b"), Tensor::zeros(&[c_out]));
        };
        let mut c_in = 1;
        for (i, &f) in config.filters.iter().enumerate() {
            conv(&mut params, format!("enc{i}"), c_in, f);
            c_in = f;
        }
        let inner = (h / factor, w / factor, c_in);
        let flat = inner.0 * inner.1 * inner.2;
        // decoder convs mirror the encoder, ending in one channel
        let mut outs: Vec<usize> = config.filters.iter().rev().skip(1).copied().collect();
        outs.push(1);
        let mut c = c_in;
        for (i, &f) in outs.iter().enumerate() {
            conv(&mut params, format!("dec{i}"), c, f);
            c = f;
        }
        params.insert("code.w", glorot_uniform(&[config.bottleneck, flat], flat, config.bottleneck, &mut rng));
        params.insert("code.b", Tensor::zeros(&[config.bottleneck]));
        params.insert("expand.w", glorot_uniform(&[flat, config.bottleneck], config.bottleneck, flat, &mut rng));
        params.insert("expand.b", Tensor::zeros(&[flat]));
        Ok(Self { config, params, inner })
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn encode_var(&self, tape: &mut Tape, p: &crate::tensor::BoundParams, x: Var) -> Result<Var, BaselineError> {
        let mut h = x;
        for i in 0..self.config.filters.len() {
            h = tape.conv2d(h, p.var(&format!("enc{i}.k"))?, p.var(&format!("enc{i}.b"))?, 1, 1)?;
            h = tape.relu(h)?;
            h = tape.maxpool2d(h, 2, 2)?;
        }
        let n = tape.shape(h)[0];
        let flat = self.inner.0 * self.inner.1 * self.inner.2;
        let h = tape.reshape(h, &[n, flat])?;
        Ok(tape.dense(h, p.var("code.w")?, p.var("code.b")?, Activation::Sigmoid)?)
    }

    fn decode_var(&self, tape: &mut Tape, p: &crate::tensor::BoundParams, code: Var) -> Result<Var, BaselineError> {
        let n = tape.shape(code)[0];
        let h = tape.dense(code, p.var("expand.w")?, p.var("expand.b")?, Activation::Relu)?;
        let mut h = tape.reshape(h, &[n, self.inner.0, self.inner.1, self.inner.2])?;
        let levels = self.config.filters.len();
        for i in 0..levels {
            h = tape.upsample_nearest(h, 2)?;
            h = tape.conv2d(h, p.var(&format!("dec{i}.k"))?, p.var(&format!("dec{i}.b"))?, 1, 1)?;
            h = if i + 1 == levels { tape.sigmoid(h)? } else { tape.relu(h)? };
        }
        Ok(h)
    }

    fn batch(&self, images: &[&Tensor]) -> Result<Tensor, BaselineError> {
        let (h, w) = self.config.input_size;
        let mut rows = Vec::with_capacity(images.len());
        for img in images {
            if !matches!(img.shape(), [a, b] | [a, b, 1] if *a == h && *b == w) {
                return Err(BaselineError::InvalidArgument(format!(
                    "image shape {:?}, autoencoder expects {h}x{w}",
                    img.shape()
                )));
            }
            rows.push((*img).clone().reshape(&[h, w, 1])?);
        }
        let refs: Vec<&Tensor> = rows.iter().collect();
        Ok(Tensor::stack(&refs)?)
    }

    /// Bottleneck code of each image.
    pub fn encode(&self, images: &[&Tensor]) -> Result<Vec<Vec<f64>>, BaselineError> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(64) {
            let mut tape = Tape::new();
            let p = self.params.bind_frozen(&mut tape);
            let x = tape.constant(self.batch(chunk)?);
            let code = self.encode_var(&mut tape, &p, x)?;
            let v = tape.value(code);
            out.extend(v.data().chunks(self.config.bottleneck).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    /// Reconstruction of each image.
    pub fn reconstruct(&self, images: &[&Tensor]) -> Result<Vec<Tensor>, BaselineError> {
        let (h, w) = self.config.input_size;
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let x = tape.constant(self.batch(images)?);
        let code = self.encode_var(&mut tape, &p, x)?;
        let y = self.decode_var(&mut tape, &p, code)?;
        Ok(tape.value(y).data().chunks(h * w).map(|c| Tensor::new(&[h, w], c.to_vec()).expect("shape")).collect())
    }
}

/// Trains the autoencoder to reconstruct `images` under mean binary
/// cross-entropy; returns the model and the mean loss per epoch.
pub fn train_autoencoder(
    images: &[&Tensor],
    config: &AutoencoderConfig,
) -> Result<(Autoencoder, Vec<f64>), BaselineError> {
    if images.is_empty() {
        return Err(BaselineError::InvalidArgument("no training images".into()));
    }
    if images.iter().any(|t| t.data().iter().any(|v| !(0.0..=1.0).contains(v))) {
        return Err(BaselineError::InvalidArgument("autoencoder images must lie in [0, 1]".into()));
    }
    let mut model = Autoencoder::new(config.clone())?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = rng_from_seed(config.seed ^ 0x5eed_0003);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&Tensor> = chunk.iter().map(|&i| images[i]).collect();
            let x_val = model.batch(&batch)?;
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape, |_| true);
            let x = tape.constant(x_val.clone());
            let code = model.encode_var(&mut tape, &p, x)?;
            let y = model.decode_var(&mut tape, &p, code)?;
            let loss = tape.bce(y, &x_val).map_err(|_| BaselineError::NonFiniteLoss { epoch })?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(BaselineError::NonFiniteLoss { epoch });
            }
            let grads = tape.backward(loss)?;
            adam.step(&mut model.params, &p.gradients(&tape, &grads))?;
            total += lv;
            batches += 1;
        }
        losses.push(total / batches as f64);
    }
    Ok((model, losses))
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `−(BCE(a→b) + BCE(b→a)) / 2` over codes in (0, 1); larger is more similar.
pub fn bce_similarity(a: &[f64], b: &[f64]) -> f64 {
    let bce = |t: &[f64], p: &[f64]| {
        t.iter()
            .zip(p)
            .map(|(&t, &p)| {
                let p = p.clamp(1e-12, 1.0 - 1e-12);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / t.len() as f64
    };
    -(bce(a, b) + bce(b, a)) / 2.0
}

/// Scores test pairs by code similarity and predicts an interaction when the
/// score is at least the mean over the test pairs.
pub fn autoencoder_classify(
    model: &Autoencoder,
    pairs: &[(String, String)],
    images: &BTreeMap<String, Tensor>,
    criterion: AeCriterion,
) -> Result<Vec<Prediction>, BaselineError> {
    if pairs.is_empty() {
        return Err(BaselineError::NoPairs);
    }
    let mut ids: Vec<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    ids.sort_unstable();
    ids.dedup();
    let imgs = ids.iter().map(|id| lookup(images, id)).collect::<Result<Vec<_>, _>>()?;
    let codes: BTreeMap<&str, Vec<f64>> = ids.iter().copied().zip(model.encode(&imgs)?).collect();
    let scores: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| {
            let (ca, cb) = (&codes[a.as_str()], &codes[b.as_str()]);
            match criterion {
                AeCriterion::Bce => bce_similarity(ca, cb),
                AeCriterion::Cosine => cosine_similarity(ca, cb),
            }
        })
        .collect();
    Ok(super::threshold_at_mean(pairs, &scores))
}

/// Trains on `train_images` and classifies `test_pairs`.
pub fn autoencoder_baseline(
    train_images: &[&Tensor],
    test_pairs: &[(String, String)],
    images: &BTreeMap<String, Tensor>,
    criterion: AeCriterion,
    config: &AutoencoderConfig,
) -> Result<Vec<Prediction>, BaselineError> {
    let (model, _) = train_autoencoder(train_images, config)?;
    autoencoder_classify(&model, test_pairs, images, criterion)
}
