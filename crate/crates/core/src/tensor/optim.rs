use std::collections::BTreeMap;

use super::{ParamStore, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
}

impl AdamState {
    pub fn new(shape: &[usize]) -> Self {
        Self { m: Tensor::zeros(shape), v: Tensor::zeros(shape), t: 0 }
    }

    /// One bias-corrected Adam update of `param` in place.
    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &Tensor, cfg: &AdamConfig) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(TensorError::Dimension(format!(
                "adam `{name}`: param {:?}, grad {:?}, state {:?}",
                param.shape(),
                grad.shape(),
                self.m.shape()
            )));
        }
        if !grad.is_finite() {
            return Err(TensorError::NonFiniteGradient(name.to_string()));
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let m = self.m.data_mut();
        for (m, &g) in m.iter_mut().zip(grad.data()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        let v = self.v.data_mut();
        for (v, &g) in v.iter_mut().zip(grad.data()) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
        for ((p, &m), &v) in param.data_mut().iter_mut().zip(self.m.data()).zip(self.v.data()) {
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Adam over a named parameter store.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: BTreeMap<String, AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, states: BTreeMap::new() }
    }

    /// Applies one update per `(name, gradient)` entry. All gradients are
    /// validated before any parameter is touched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[(String, Tensor)]) -> Result<()> {
        for (name, g) in grads {
            if !g.is_finite() {
                return Err(TensorError::NonFiniteGradient(name.clone()));
            }
        }
        for (name, g) in grads {
            let p = params.get_mut(name).ok_or_else(|| TensorError::UnknownParam(name.clone()))?;
            let state = self.states.entry(name.clone()).or_insert_with(|| AdamState::new(p.shape()));
            state.step(name, p, g, &self.config)?;
        }
        Ok(())
    }

    pub fn state(&self, name: &str) -> Option<&AdamState> {
        self.states.get(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::from_vec(vec![0.5, -1.0]);
        let before = p.clone();
        let mut s = AdamState::new(p.shape());
        s.step("w", &mut p, &Tensor::zeros(&[2]), &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let lr = 5e-5;
        let mut p = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let mut s = AdamState::new(p.shape());
        s.step("w", &mut p, &Tensor::ones(&[3]), &AdamConfig::with_lr(lr)).unwrap();
        for (a, b) in p.data().iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - a - lr).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_positive_gradient_decreases_monotonically() {
        let mut p = Tensor::from_vec(vec![0.0]);
        let mut s = AdamState::new(p.shape());
        let cfg = AdamConfig::with_lr(0.01);
        let g = Tensor::from_vec(vec![0.7]);
        s.step("w", &mut p, &g, &cfg).unwrap();
        let first = p.item();
        s.step("w", &mut p, &g, &cfg).unwrap();
        assert!(first < 0.0);
        assert!(p.item() < first);
        // constant gradient: bias-corrected m̂/sqrt(v̂) is exactly 1 each step
        assert!((p.item() + 0.02).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = ParamStore::new();
        store.insert("conv1.w", Tensor::zeros(&[2]));
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam
            .step(&mut store, &[("conv1.w".into(), Tensor::from_vec(vec![f64::NAN, 0.0]))])
            .unwrap_err();
        assert_eq!(err, TensorError::NonFiniteGradient("conv1.w".into()));
    }
}
