use rand::seq::SliceRandom;

use crate::tensor::{glorot_uniform, rng_from_seed, Activation, Adam, AdamConfig, ParamStore, Tape, Tensor, Var};

use super::FusionError;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    /// Hidden layer widths; empty gives logistic regression.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Standardize each input column with training-set statistics.
    pub standardize: bool,
    /// Record training-set accuracy after every epoch.
    pub track_train_accuracy: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1000, 500, 200, 50],
            activation: Activation::Relu,
            lr: 1e-3,
            epochs: 100,
            batch_size: 64,
            seed: 0,
            standardize: false,
            track_train_accuracy: false,
        }
    }
}

/// Feed-forward network with one sigmoid output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    params: ParamStore,
    activation: Activation,
    layers: usize,
    input_dim: usize,
    scaler: Option<(Vec<f64>, Vec<f64>)>,
}

fn activation_code(a: Activation) -> f64 {
    match a {
        Activation::Relu => 0.0,
        Activation::Tanh => 1.0,
        Activation::Sigmoid => 2.0,
        Activation::None => 3.0,
    }
}

fn activation_from_code(c: f64) -> Option<Activation> {
    [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::None].into_iter().find(|a| activation_code(*a) == c)
}

impl Mlp {
    pub fn new(input_dim: usize, config: &ClassifierConfig) -> Result<Self, FusionError> {
        if input_dim == 0 || config.hidden.contains(&0) {
            return Err(FusionError::InvalidConfig("layer widths must be positive".into()));
        }
        let mut rng = rng_from_seed(config.seed);
        let mut params = ParamStore::new();
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden);
        widths.push(1);
        for (l, w) in widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            params.insert(format!("l{l}.w"), glorot_uniform(&[n_out, n_in], n_in, n_out, &mut rng));
            params.insert(format!("l{l}.b"), Tensor::zeros(&[n_out]));
        }
        Ok(Self { params, activation: config.activation, layers: widths.len() - 1, input_dim, scaler: None })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        (0..self.layers - 1).map(|l| self.params.get(&format!("l{l}.b")).expect("layer bias").len()).collect()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Weights plus `meta.*` entries (activation code, standardization
    /// statistics) so one checkpoint restores the whole classifier.
    pub fn to_params(&self) -> ParamStore {
        let mut out = self.params.clone();
        out.insert("meta.activation", Tensor::scalar(activation_code(self.activation)));
        if let Some((mean, scale)) = &self.scaler {
            out.insert("meta.mean", Tensor::from_vec(mean.clone()));
            out.insert("meta.scale", Tensor::from_vec(scale.clone()));
        }
        out
    }

    pub fn from_params(store: &ParamStore) -> Result<Self, FusionError> {
        let code = store.require("meta.activation")?.item();
        let activation = activation_from_code(code)
            .ok_or_else(|| FusionError::InvalidConfig(format!("unknown activation code {code}")))?;
        let mut params = ParamStore::new();
        let mut layers = 0;
        while let (Some(w), Some(b)) = (store.get(&format!("l{layers}.w")), store.get(&format!("l{layers}.b"))) {
            params.insert(format!("l{layers}.w"), w.clone());
            params.insert(format!("l{layers}.b"), b.clone());
            layers += 1;
        }
        if layers == 0 {
            return Err(FusionError::InvalidConfig("checkpoint has no layers".into()));
        }
        let input_dim = params.require("l0.w")?.shape()[1];
        let scaler = match (store.get("meta.mean"), store.get("meta.scale")) {
            (Some(m), Some(s)) => Some((m.data().to_vec(), s.data().to_vec())),
            _ => None,
        };
        Ok(Self { params, activation, layers, input_dim, scaler })
    }

    fn batch_tensor(&self, rows: &[&[f64]]) -> Result<Tensor, FusionError> {
        let mut data = Vec::with_capacity(rows.len() * self.input_dim);
        for r in rows {
            if r.len() != self.input_dim {
                return Err(FusionError::Dimension(format!("feature width {}, model expects {}", r.len(), self.input_dim)));
            }
            match &self.scaler {
                Some((mean, scale)) => data.extend(r.iter().zip(mean).zip(scale).map(|((x, m), s)| (x - m) / s)),
                None => data.extend_from_slice(r),
            }
        }
        Ok(Tensor::new(&[rows.len(), self.input_dim], data)?)
    }

    fn logits(&self, tape: &mut Tape, vars: &[(Var, Var)], x: Var) -> Result<Var, FusionError> {
        let mut h = x;
        for (l, &(w, b)) in vars.iter().enumerate() {
            let act = if l + 1 == self.layers { Activation::None } else { self.activation };
            h = tape.dense(h, w, b, act)?;
        }
        let n = tape.shape(h)[0];
        Ok(tape.reshape(h, &[n])?)
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<(crate::tensor::BoundParams, Vec<(Var, Var)>), FusionError> {
        let bound = if trainable { self.params.bind(tape, |_| true) } else { self.params.bind_frozen(tape) };
        let vars = (0..self.layers)
            .map(|l| Ok((bound.var(&format!("l{l}.w"))?, bound.var(&format!("l{l}.b"))?)))
            .collect::<Result<Vec<_>, FusionError>>()?;
        Ok((bound, vars))
    }

    /// Interaction probability for each feature row.
    pub fn predict_proba(&self, features: &[Vec<f64>]) -> Result<Vec<f64>, FusionError> {
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(512) {
            let rows: Vec<&[f64]> = chunk.iter().map(Vec::as_slice).collect();
            let mut tape = Tape::new();
            let (_, vars) = self.bind(&mut tape, false)?;
            let x = tape.constant(self.batch_tensor(&rows)?);
            let z = self.logits(&mut tape, &vars, x)?;
            out.extend(tape.value(z).data().iter().map(|&z| crate::tensor::sigmoid(z)));
        }
        Ok(out)
    }

    pub fn predict(&self, features: &[Vec<f64>], threshold: f64) -> Result<Vec<bool>, FusionError> {
        Ok(self.predict_proba(features)?.into_iter().map(|p| p >= threshold).collect())
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierHistory {
    pub model: Mlp,
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Training accuracy after each epoch; empty unless tracked.
    pub train_accuracy: Vec<f64>,
}

pub fn train_classifier(features: &[Vec<f64>], labels: &[bool], config: &ClassifierConfig) -> Result<Mlp, FusionError> {
    train_classifier_with_history(features, labels, config).map(|h| h.model)
}

/// Minibatch Adam on mean binary cross-entropy of the sigmoid output.
pub fn train_classifier_with_history(
    features: &[Vec<f64>],
    labels: &[bool],
    config: &ClassifierConfig,
) -> Result<ClassifierHistory, FusionError> {
    if features.len() != labels.len() {
        return Err(FusionError::Dimension(format!("{} features, {} labels", features.len(), labels.len())));
    }
    if features.is_empty() {
        return Err(FusionError::Empty("training set"));
    }
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        return Err(FusionError::SingleClass);
    }
    if config.batch_size == 0 || config.lr.is_nan() || config.lr <= 0.0 {
        return Err(FusionError::InvalidConfig("batch size and learning rate must be positive".into()));
    }
    let dim = features[0].len();
    let mut model = Mlp::new(dim, config)?;
    if config.standardize {
        let n = features.len() as f64;
        let mut mean = vec![0.0; dim];
        for f in features {
            if f.len() != dim {
                return Err(FusionError::Dimension(format!("feature width {} vs {dim}", f.len())));
            }
            mean.iter_mut().zip(f).for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; dim];
        for f in features {
            var.iter_mut().zip(f).zip(&mean).for_each(|((v, x), m)| *v += (x - m) * (x - m) / n);
        }
        let scale = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        model.scaler = Some((mean, scale));
    }

    let mut adam = Adam::new(AdamConfig::with_lr(config.lr));
    let mut rng = rng_from_seed(config.seed ^ 0x5eed_0002);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut train_accuracy = Vec::new();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| features[i].as_slice()).collect();
            let targets = Tensor::from_vec(chunk.iter().map(|&i| f64::from(u8::from(labels[i]))).collect());
            let mut tape = Tape::new();
            let (bound, vars) = model.bind(&mut tape, true)?;
            let x = tape.constant(model.batch_tensor(&rows)?);
            let z = model.logits(&mut tape, &vars, x)?;
            let loss = tape.bce_with_logits(z, &targets).map_err(|_| FusionError::NonFiniteLoss { epoch })?;
            let lv = tape.value(loss).item();
            let grads = tape.backward(loss)?;
            adam.step(&mut model.params, &bound.gradients(&tape, &grads))?;
            total += lv;
            batches += 1;
        }
        epoch_losses.push(total / batches as f64);
        if config.track_train_accuracy {
            let pred = model.predict(features, 0.5)?;
            let correct = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
            train_accuracy.push(correct as f64 / labels.len() as f64);
        }
    }
    Ok(ClassifierHistory { model, epoch_losses, train_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// Points labelled by the sign of a fixed hyperplane, with a margin.
    fn separable(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = rng_from_seed(seed);
        let normal: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        while xs.len() < n {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
            if s.abs() > 0.1 {
                xs.push(x);
                ys.push(s > 0.0);
            }
        }
        (xs, ys)
    }

    fn small(epochs: usize) -> ClassifierConfig {
        ClassifierConfig { hidden: vec![16], epochs, batch_size: 16, lr: 1e-2, seed: 4, ..ClassifierConfig::default() }
    }

    #[test]
    fn fits_separable_data() {
        let (x, y) = separable(200, 20, 1);
        let model = train_classifier(&x, &y, &small(50)).unwrap();
        let acc = model.predict(&x, 0.5).unwrap().iter().zip(&y).filter(|(p, t)| p == t).count() as f64 / 200.0;
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn zero_epochs_predicts_finite_probabilities() {
        let (x, y) = separable(20, 5, 2);
        let model = train_classifier(&x, &y, &small(0)).unwrap();
        let p = model.predict_proba(&x).unwrap();
        assert!(p.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
        assert_eq!(model, Mlp::new(5, &small(0)).unwrap());
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = separable(60, 8, 3);
        let a = train_classifier(&x, &y, &small(5)).unwrap();
        let b = train_classifier(&x, &y, &small(5)).unwrap();
        assert!(a.params().bitwise_eq(b.params()));
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(train_classifier(&x, &[true, true], &small(1)), Err(FusionError::SingleClass)));
    }

    #[test]
    fn logistic_variant_and_standardization() {
        let (x, y) = separable(100, 4, 5);
        let x: Vec<Vec<f64>> = x.into_iter().map(|r| r.into_iter().map(|v| v * 50.0 + 10.0).collect()).collect();
        let cfg = ClassifierConfig { hidden: vec![], standardize: true, ..small(40) };
        let model = train_classifier(&x, &y, &cfg).unwrap();
        assert!(model.hidden_sizes().is_empty());
        let acc = model.predict(&x, 0.5).unwrap().iter().zip(&y).filter(|(p, t)| p == t).count();
        assert!(acc >= 95, "{acc}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let (x, y) = separable(40, 6, 6);
        let cfg = ClassifierConfig { standardize: true, activation: Activation::Tanh, ..small(2) };
        let model = train_classifier(&x, &y, &cfg).unwrap();
        let back = Mlp::from_params(&model.to_params()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.hidden_sizes(), vec![16]);
    }

    #[test]
    fn history_tracks_accuracy() {
        let (x, y) = separable(50, 4, 7);
        let cfg = ClassifierConfig { track_train_accuracy: true, ..small(3) };
        let h = train_classifier_with_history(&x, &y, &cfg).unwrap();
        assert_eq!(h.epoch_losses.len(), 3);
        assert_eq!(h.train_accuracy.len(), 3);
    }
}
