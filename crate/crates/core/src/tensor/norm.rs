use super::{Result, Tape, Tensor, TensorError, Var};

/// Per-feature mean and (biased) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormStats {
    /// Running statistics at initialization: mean 0, variance 1.
    pub fn identity(features: usize) -> Self {
        Self { mean: vec![0.0; features], var: vec![1.0; features] }
    }

    /// Exponential moving average toward `batch`.
    pub fn update(&mut self, batch: &BatchNormStats, momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}

fn check_affine(tape: &Tape, x: Var, gamma: Var, beta: Var) -> Result<usize> {
    let shape = tape.shape(x);
    let c = *shape.last().expect("non-empty shape");
    if tape.shape(gamma) != [c] || tape.shape(beta) != [c] {
        return Err(TensorError::Dimension(format!(
            "batchnorm: {c} features but gamma {:?}, beta {:?}",
            tape.shape(gamma),
            tape.shape(beta)
        )));
    }
    Ok(c)
}

impl Tape {
    /// Batch normalization over every axis but the last, using the batch's own
    /// statistics. Returns the normalized output and the batch statistics so
    /// the caller can update its running averages.
    pub fn batchnorm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchNormStats)> {
        let c = check_affine(self, x, gamma, beta)?;
        let shape = self.shape(x).to_vec();
        let batch = if shape.len() >= 2 { shape[0] } else { 1 };
        if batch < 2 {
            return Err(TensorError::DegenerateBatch(format!(
                "train-mode batchnorm needs at least 2 examples, got {batch}"
            )));
        }
        let xd = self.value(x).data();
        let rows = xd.len() / c;
        let m = rows as f64;
        let mut mean = vec![0.0; c];
        for r in 0..rows {
            for j in 0..c {
                mean[j] += xd[r * c + j];
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; c];
        for r in 0..rows {
            for j in 0..c {
                let d = xd[r * c + j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            for j in 0..c {
                let i = r * c + j;
                xhat[i] = (xd[i] - mean[j]) * inv_std[j];
                out[i] = g[j] * xhat[i] + b[j];
            }
        }
        let out = Tensor::new(&shape, out)?;
        let stats = BatchNormStats { mean, var };
        let v = self.push(
            "batchnorm_train",
            out,
            &[x, gamma, beta],
            Box::new(move |gout, p, _| {
                let gd = gout.data();
                let gamma = p[1].data();
                let mut sum_dxhat = vec![0.0; c];
                let mut sum_dxhat_xhat = vec![0.0; c];
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for r in 0..rows {
                    for j in 0..c {
                        let i = r * c + j;
                        let dxhat = gd[i] * gamma[j];
                        sum_dxhat[j] += dxhat;
                        sum_dxhat_xhat[j] += dxhat * xhat[i];
                        ggamma[j] += gd[i] * xhat[i];
                        gbeta[j] += gd[i];
                    }
                }
                let mut gx = vec![0.0; gd.len()];
                for r in 0..rows {
                    for j in 0..c {
                        let i = r * c + j;
                        let dxhat = gd[i] * gamma[j];
                        gx[i] = inv_std[j] / m * (m * dxhat - sum_dxhat[j] - xhat[i] * sum_dxhat_xhat[j]);
                    }
                }
                vec![
                    Some(Tensor::new(p[0].shape(), gx).expect("shape")),
                    Some(Tensor::new(p[1].shape(), ggamma).expect("shape")),
                    Some(Tensor::new(p[2].shape(), gbeta).expect("shape")),
                ]
            }),
        )?;
        Ok((v, stats))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &BatchNormStats,
        eps: f64,
    ) -> Result<Var> {
        let c = check_affine(self, x, gamma, beta)?;
        if running.mean.len() != c || running.var.len() != c {
            return Err(TensorError::Dimension(format!(
                "batchnorm: running stats hold {} features, input has {c}",
                running.mean.len()
            )));
        }
        let scale: Vec<f64> = running.var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mean = running.mean.clone();
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let out: Vec<f64> = xd
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let j = i % c;
                g[j] * (v - mean[j]) * scale[j] + b[j]
            })
            .collect();
        let out = Tensor::new(self.shape(x), out)?;
        self.push(
            "batchnorm_eval",
            out,
            &[x, gamma, beta],
            Box::new(move |gout, p, _| {
                let gd = gout.data();
                let (xd, gamma) = (p[0].data(), p[1].data());
                let mut gx = vec![0.0; gd.len()];
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for (i, &gv) in gd.iter().enumerate() {
                    let j = i % c;
                    let xhat = (xd[i] - mean[j]) * scale[j];
                    gx[i] = gv * gamma[j] * scale[j];
                    ggamma[j] += gv * xhat;
                    gbeta[j] += gv;
                }
                vec![
                    Some(Tensor::new(p[0].shape(), gx).expect("shape")),
                    Some(Tensor::new(p[1].shape(), ggamma).expect("shape")),
                    Some(Tensor::new(p[2].shape(), gbeta).expect("shape")),
                ]
            }),
        )
    }
}
