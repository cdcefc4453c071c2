use crate::tensor::{
    glorot_uniform, rng_from_seed, Activation, BatchNormStats, BoundParams, ParamStore, Tape, Tensor, TensorError,
    Var,
};

use super::stn::{apply_localiser, init_localiser};
use super::{ImageError, ShapeTrace, TowerConfig};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Seed offset for localisation parameters, so the tower initialization does
/// not depend on whether the spatial transformer is enabled.
const STN_SEED_OFFSET: u64 = 0x5354_4e00;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// One parameter set evaluated by both sub-networks of the Siamese pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel {
    config: TowerConfig,
    trace: ShapeTrace,
    params: ParamStore,
    use_stn: bool,
}

/// Builds the default (seed 0, no spatial transformer) model for `config`.
pub fn build_tower(config: TowerConfig) -> Result<SiameseModel, ImageError> {
    SiameseModel::new(config, false, 0)
}

fn running_name(layer: usize, what: &str) -> String {
    format!("bn{layer}.running_{what}")
}

pub(crate) fn is_trainable(name: &str) -> bool {
    !name.contains(".running_")
}

impl SiameseModel {
    pub fn new(config: TowerConfig, use_stn: bool, seed: u64) -> Result<Self, ImageError> {
        let trace = config.trace()?;
        let mut rng = rng_from_seed(seed);
        let mut params = ParamStore::new();
        let k = config.kernel;
        for (i, block) in trace.blocks.iter().enumerate() {
            let l = i + 1;
            let (c, f) = (block.in_channels, block.filters);
            params.insert(format!("conv{l}.w"), glorot_uniform(&[k, k, c, f], k * k * c, k * k * f, &mut rng));
            params.insert(format!("conv{l}.b"), Tensor::zeros(&[f]));
            params.insert(format!("bn{l}.gamma"), Tensor::ones(&[f]));
            params.insert(format!("bn{l}.beta"), Tensor::zeros(&[f]));
            params.insert(running_name(l, "mean"), Tensor::zeros(&[f]));
            params.insert(running_name(l, "var"), Tensor::ones(&[f]));
        }
        let mut fan_in = trace.flatten_dim;
        for (i, &units) in config.fc_sizes.iter().enumerate() {
            let l = i + 1;
            params.insert(format!("fc{l}.w"), glorot_uniform(&[units, fan_in], fan_in, units, &mut rng));
            params.insert(format!("fc{l}.b"), Tensor::zeros(&[units]));
            fan_in = units;
        }
        if use_stn {
            let mut stn_rng = rng_from_seed(seed.wrapping_add(STN_SEED_OFFSET));
            init_localiser(&mut params, config.input_size, &mut stn_rng)?;
        }
        Ok(Self { config, trace, params, use_stn })
    }

    /// Rebuilds a model around previously saved parameters.
    pub fn from_params(config: TowerConfig, params: ParamStore) -> Result<Self, ImageError> {
        let use_stn = params.get("stn.fc2.b").is_some();
        let fresh = Self::new(config.clone(), use_stn, 0)?;
        for (name, t) in fresh.params.iter() {
            let got = params.require(name)?;
            if got.shape() != t.shape() {
                return Err(ImageError::Tensor(TensorError::Checkpoint(format!(
                    "`{name}` has shape {:?}, config expects {:?}",
                    got.shape(),
                    t.shape()
                ))));
            }
        }
        Ok(Self { config, trace: fresh.trace, params, use_stn })
    }

    pub fn config(&self) -> &TowerConfig {
        &self.config
    }

    pub fn trace(&self) -> &ShapeTrace {
        &self.trace
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn uses_stn(&self) -> bool {
        self.use_stn
    }

    pub fn embedding_dim(&self) -> usize {
        self.trace.embedding_dim
    }

    pub fn flatten_dim(&self) -> usize {
        self.trace.flatten_dim
    }

    /// Copy of this model with the spatial transformer switched off; the tower
    /// parameters are shared unchanged.
    pub fn without_stn(&self) -> Self {
        let mut params = ParamStore::new();
        for (n, t) in self.params.iter().filter(|(n, _)| !n.starts_with("stn.")) {
            params.insert(n, t.clone());
        }
        Self { config: self.config.clone(), trace: self.trace.clone(), params, use_stn: false }
    }

    pub(crate) fn running_stats(&self, layer: usize) -> Result<BatchNormStats, TensorError> {
        Ok(BatchNormStats {
            mean: self.params.require(&running_name(layer, "mean"))?.data().to_vec(),
            var: self.params.require(&running_name(layer, "var"))?.data().to_vec(),
        })
    }

    pub(crate) fn update_running_stats(&mut self, batch: &[BatchNormStats]) -> Result<(), TensorError> {
        for (i, stats) in batch.iter().enumerate() {
            let l = i + 1;
            let mut running = self.running_stats(l)?;
            running.update(stats, BN_MOMENTUM);
            self.params.insert(running_name(l, "mean"), Tensor::from_vec(running.mean));
            self.params.insert(running_name(l, "var"), Tensor::from_vec(running.var));
        }
        Ok(())
    }

    /// Runs the tower on a batch `[N, H, W, 1]`, returning `[N, 100]` and,
    /// in train mode, the batch statistics of every batchnorm layer.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: Var,
        mode: Mode,
    ) -> Result<(Var, Vec<BatchNormStats>), TensorError> {
        let mut h = if self.use_stn { apply_localiser(tape, params, x)? } else { x };
        let mut batch_stats = Vec::new();
        for l in 1..=self.trace.blocks.len() {
            h = tape.conv2d(h, params.var(&format!("conv{l}.w"))?, params.var(&format!("conv{l}.b"))?, 1, 0)?;
            h = tape.activation(h, self.config.activation)?;
            h = tape.maxpool2d(h, self.config.pool, self.config.pool)?;
            let gamma = params.var(&format!("bn{l}.gamma"))?;
            let beta = params.var(&format!("bn{l}.beta"))?;
            h = match mode {
                Mode::Train => {
                    let (out, stats) = tape.batchnorm_train(h, gamma, beta, BN_EPS)?;
                    batch_stats.push(stats);
                    out
                }
                Mode::Eval => tape.batchnorm_eval(h, gamma, beta, &self.running_stats(l)?, BN_EPS)?,
            };
        }
        let n = tape.shape(h)[0];
        let mut h = tape.reshape(h, &[n, self.trace.flatten_dim])?;
        let layers = self.config.fc_sizes.len();
        for l in 1..=layers {
            let act = if l == layers { Activation::None } else { self.config.activation };
            h = tape.dense(h, params.var(&format!("fc{l}.w"))?, params.var(&format!("fc{l}.b"))?, act)?;
        }
        Ok((h, batch_stats))
    }

    fn check_image(&self, image: &Tensor) -> Result<(), ImageError> {
        let (h, w) = self.config.input_size;
        let ok = matches!(image.shape(), [a, b] | [a, b, 1] if *a == h && *b == w);
        if ok {
            Ok(())
        } else {
            Err(ImageError::WrongSize { expected: (h, w), got: image.shape().to_vec() })
        }
    }

    /// Eval-mode embeddings for a batch of images. Rows are independent of
    /// each other, so the result does not depend on batch composition.
    pub fn embed_batch(&self, images: &[&Tensor]) -> Result<Vec<Vec<f64>>, ImageError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        for img in images {
            self.check_image(img)?;
        }
        let (h, w) = self.config.input_size;
        let flat: Vec<Tensor> = images.iter().map(|t| (*t).clone().reshape(&[h, w, 1])).collect::<Result<_, _>>()?;
        let refs: Vec<&Tensor> = flat.iter().collect();
        let batch = Tensor::stack(&refs)?;
        let mut tape = Tape::new();
        let params = self.params.bind_frozen(&mut tape);
        let x = tape.constant(batch);
        let (out, _) = self.forward(&mut tape, &params, x, Mode::Eval)?;
        let out = tape.value(out);
        Ok((0..images.len()).map(|i| out.row(i).to_vec()).collect())
    }
}

/// Deterministic 100-dim embedding of one `[H, W]` or `[H, W, 1]` image.
pub fn embed_image(model: &SiameseModel, image: &Tensor) -> Result<Vec<f64>, ImageError> {
    Ok(model.embed_batch(&[image])?.pop().expect("one row"))
}
