use rand::Rng as _;

use super::{rng_from_seed, Result, Tape, Tensor, TensorError, Var};

/// Central-difference step used by [`gradcheck`].
pub const GRADCHECK_EPS: f64 = 1e-3;

/// A sample is rejected when some op sits closer than this many steps to a kink.
const KINK_STEPS: f64 = 2.0;
const MAX_ATTEMPTS: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// `max |analytic − numeric| / max(1, |numeric|)` over every input element.
    pub max_rel_error: f64,
    /// Smallest kink distance reported by the ops at the sampled point.
    pub kink_margin: f64,
}

fn forward_loss<F>(op: &F, inputs: &[Tensor], projection: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = op(&mut tape, &vars)?;
    let weights = &projection[0];
    if tape.value(out).len() != weights.len() {
        return Err(TensorError::Dimension("gradcheck: output size changed between evaluations".into()));
    }
    let loss = tape.dot_const(out, weights)?;
    Ok((tape, vars, loss))
}

/// Compares tape gradients of `op` at the fixed point `inputs` against central
/// finite differences. The op's output is reduced to a scalar through a fixed
/// projection so every output element contributes.
pub fn gradcheck_with<F>(op: F, inputs: &[Tensor], projection: &Tensor, eps: f64) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let projection = [projection.clone()];
    let (tape, vars, loss) = forward_loss(&op, inputs, &projection)?;
    let kink_margin = tape.kink_margin();
    let grads = tape.backward(loss)?;
    let mut max_rel_error: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(&tape, *var);
        for j in 0..inputs[k].len() {
            let orig = inputs[k].data()[j];
            probe[k].data_mut()[j] = orig + eps;
            let (tp, _, lp) = forward_loss(&op, &probe, &projection)?;
            probe[k].data_mut()[j] = orig - eps;
            let (tm, _, lm) = forward_loss(&op, &probe, &projection)?;
            probe[k].data_mut()[j] = orig;
            let numeric = (tp.value(lp).item() - tm.value(lm).item()) / (2.0 * eps);
            let err = (analytic.data()[j] - numeric).abs() / numeric.abs().max(1.0);
            max_rel_error = max_rel_error.max(err);
        }
    }
    Ok(GradcheckReport { max_rel_error, kink_margin })
}

/// Samples inputs of the given shapes uniformly in `[-1, 1)` from `seed` and
/// runs [`gradcheck_with`] at `eps = 1e-3`. Samples that land within a few
/// steps of a relu/maxpool/sampler kink are redrawn.
pub fn gradcheck<F>(op: F, shapes: &[Vec<usize>], seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = rng_from_seed(seed);
    let mut last = None;
    for _ in 0..MAX_ATTEMPTS {
        let inputs: Vec<Tensor> = shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                Tensor::new(s, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .collect::<Result<_>>()?;
        let mut probe = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| probe.leaf(t.clone())).collect();
        let out = op(&mut probe, &vars)?;
        if probe.kink_margin() < KINK_STEPS * GRADCHECK_EPS {
            continue;
        }
        let n_out = probe.value(out).len();
        let projection =
            Tensor::new(probe.value(out).shape(), (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let report = gradcheck_with(&op, &inputs, &projection, GRADCHECK_EPS)?;
        last = Some(report.max_rel_error);
        break;
    }
    last.ok_or_else(|| {
        TensorError::Dimension(format!("gradcheck: no kink-free sample in {MAX_ATTEMPTS} attempts"))
    })
}
