use std::fmt;
use std::str::FromStr;

use super::{Result, Tape, Tensor, TensorError, Var};

/// Elementwise nonlinearity applied after an affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    None,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "none" | "linear" => Ok(Activation::None),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probabilities are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
const BCE_CLAMP: f64 = 1e-12;

fn same_shape(tape: &Tape, a: Var, b: Var, op: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(TensorError::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            tape.shape(a),
            tape.shape(b)
        )));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

impl Tape {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push("add", out, &[a, b], Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        self.push(
            "sub",
            out,
            &[a, b],
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.map(|v| -v))]),
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(
            "mul",
            out,
            &[a, b],
            Box::new(|g, p, _| {
                vec![Some(zip_map(g, p[1], |g, y| g * y)), Some(zip_map(g, p[0], |g, x| g * x))]
            }),
        )
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push("scale", out, &[a], Box::new(move |g, _, _| vec![Some(g.map(|v| v * s))]))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| v * v);
        self.push(
            "square",
            out,
            &[a],
            Box::new(|g, p, _| vec![Some(zip_map(g, p[0], |g, x| 2.0 * g * x))]),
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(
            "sum",
            out,
            &[a],
            Box::new(|g, p, _| vec![Some(Tensor::full(p[0].shape(), g.item()))]),
        )
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len() as f64;
        let out = Tensor::scalar(self.value(a).sum() / n);
        self.push(
            "mean",
            out,
            &[a],
            Box::new(move |g, p, _| vec![Some(Tensor::full(p[0].shape(), g.item() / n))]),
        )
    }

    /// `sum(a * weights)` for a fixed weight tensor.
    pub fn dot_const(&mut self, a: Var, weights: &Tensor) -> Result<Var> {
        if self.value(a).len() != weights.len() {
            return Err(TensorError::Dimension(format!(
                "dot_const: {} values against {} weights",
                self.value(a).len(),
                weights.len()
            )));
        }
        let s = self.value(a).data().iter().zip(weights.data()).map(|(x, w)| x * w).sum();
        let w = weights.clone();
        self.push(
            "dot_const",
            Tensor::scalar(s),
            &[a],
            Box::new(move |g, p, _| {
                let gi = g.item();
                let data = w.data().iter().map(|v| v * gi).collect();
                vec![Some(Tensor::new(p[0].shape(), data).expect("shape"))]
            }),
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push(
            "reshape",
            out,
            &[a],
            Box::new(|g, p, _| vec![Some(g.clone().reshape(p[0].shape()).expect("reshape"))]),
        )
    }

    /// Selects rows (first-axis slices) of `a`; rows may repeat.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let n = src.shape()[0];
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(TensorError::Dimension(format!("gather_rows: row {bad} of {n}")));
        }
        if rows.is_empty() {
            return Err(TensorError::Dimension("gather_rows: no rows".into()));
        }
        let width = src.len() / n;
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            data.extend_from_slice(&src.data()[r * width..(r + 1) * width]);
        }
        let mut shape = src.shape().to_vec();
        shape[0] = rows.len();
        let out = Tensor::new(&shape, data)?;
        let rows = rows.to_vec();
        self.push(
            "gather_rows",
            out,
            &[a],
            Box::new(move |g, p, _| {
                let mut acc = Tensor::zeros(p[0].shape());
                let gd = g.data();
                let ad = acc.data_mut();
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..width {
                        ad[r * width + j] += gd[k * width + j];
                    }
                }
                vec![Some(acc)]
            }),
        )
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let margin = x.data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let out = x.map(|v| v.max(0.0));
        self.note_kink(margin);
        self.push(
            "relu",
            out,
            &[a],
            Box::new(|g, p, _| {
                vec![Some(zip_map(g, p[0], |g, x| if x > 0.0 { g } else { 0.0 }))]
            }),
        )
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::tanh);
        self.push(
            "tanh",
            out,
            &[a],
            Box::new(|g, _, y| vec![Some(zip_map(g, y, |g, y| g * (1.0 - y * y)))]),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(
            "sigmoid",
            out,
            &[a],
            Box::new(|g, _, y| vec![Some(zip_map(g, y, |g, y| g * y * (1.0 - y)))]),
        )
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Result<Var> {
        match act {
            Activation::Relu => self.relu(a),
            Activation::Tanh => self.tanh(a),
            Activation::Sigmoid => self.sigmoid(a),
            Activation::None => Ok(a),
        }
    }

    /// `x · Wᵀ + b` for `x` of shape `[N, n]` (or `[n]`), `W` of shape `[m, n]`
    /// and `b` of shape `[m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let bs = self.shape(b).to_vec();
        if ws.len() != 2 {
            return Err(TensorError::Dimension(format!("linear: weight shape {ws:?} is not m×n")));
        }
        let (m, n) = (ws[0], ws[1]);
        let (rows, vector_input) = match xs.as_slice() {
            [k] if *k == n => (1, true),
            [r, k] if *k == n => (*r, false),
            _ => {
                return Err(TensorError::Dimension(format!(
                    "linear: input {xs:?} incompatible with weight {ws:?}"
                )))
            }
        };
        if bs != [m] {
            return Err(TensorError::Dimension(format!("linear: bias {bs:?}, expected [{m}]")));
        }
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; rows * m];
        for r in 0..rows {
            let xr = &xd[r * n..(r + 1) * n];
            for j in 0..m {
                let wr = &wd[j * n..(j + 1) * n];
                out[r * m + j] = bd[j] + dot(xr, wr);
            }
        }
        let shape = if vector_input { vec![m] } else { vec![rows, m] };
        let out = Tensor::new(&shape, out)?;
        self.push(
            "linear",
            out,
            &[x, w, b],
            Box::new(move |g, p, _| {
                let (xd, wd) = (p[0].data(), p[1].data());
                let gd = g.data();
                let mut gx = vec![0.0; rows * n];
                let mut gw = vec![0.0; m * n];
                let mut gb = vec![0.0; m];
                for r in 0..rows {
                    let xr = &xd[r * n..(r + 1) * n];
                    let gxr = &mut gx[r * n..(r + 1) * n];
                    for j in 0..m {
                        let gv = gd[r * m + j];
                        if gv == 0.0 {
                            continue;
                        }
                        gb[j] += gv;
                        let wr = &wd[j * n..(j + 1) * n];
                        let gwr = &mut gw[j * n..(j + 1) * n];
                        for k in 0..n {
                            gxr[k] += gv * wr[k];
                            gwr[k] += gv * xr[k];
                        }
                    }
                }
                vec![
                    Some(Tensor::new(p[0].shape(), gx).expect("shape")),
                    Some(Tensor::new(p[1].shape(), gw).expect("shape")),
                    Some(Tensor::new(p[2].shape(), gb).expect("shape")),
                ]
            }),
        )
    }

    /// Fully connected layer: `activation(x · Wᵀ + b)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
        let z = self.linear(x, w, b)?;
        self.activation(z, act)
    }

    /// Mean binary cross-entropy of probabilities `p` against fixed targets.
    pub fn bce(&mut self, p: Var, targets: &Tensor) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != targets.len() {
            return Err(TensorError::Dimension(format!(
                "bce: {} predictions, {} targets",
                pv.len(),
                targets.len()
            )));
        }
        let n = pv.len() as f64;
        let loss = pv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&p, &t)| {
                let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let t = targets.clone();
        self.push(
            "bce",
            Tensor::scalar(loss),
            &[p],
            Box::new(move |g, par, _| {
                let gi = g.item() / n;
                let data = par[0]
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&p, &t)| {
                        if p <= BCE_CLAMP || p >= 1.0 - BCE_CLAMP {
                            0.0
                        } else {
                            gi * (p - t) / (p * (1.0 - p))
                        }
                    })
                    .collect();
                vec![Some(Tensor::new(par[0].shape(), data).expect("shape"))]
            }),
        )
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against fixed targets,
    /// computed without forming the probabilities.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &Tensor) -> Result<Var> {
        let zv = self.value(logits);
        if zv.len() != targets.len() {
            return Err(TensorError::Dimension(format!(
                "bce_with_logits: {} logits, {} targets",
                zv.len(),
                targets.len()
            )));
        }
        let n = zv.len() as f64;
        let loss = zv
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let t = targets.clone();
        self.push(
            "bce_with_logits",
            Tensor::scalar(loss),
            &[logits],
            Box::new(move |g, par, _| {
                let gi = g.item() / n;
                let data =
                    par[0].data().iter().zip(t.data()).map(|(&z, &t)| gi * (sigmoid(z) - t)).collect();
                vec![Some(Tensor::new(par[0].shape(), data).expect("shape"))]
            }),
        )
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
