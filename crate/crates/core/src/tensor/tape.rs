use super::{check_finite, Result, Tensor, TensorError};

/// Maps `(upstream gradient, parent values, own output)` to one optional
/// gradient per parent. `None` means "no contribution".
pub type BackwardFn = Box<dyn Fn(&Tensor, &[&Tensor], &Tensor) -> Vec<Option<Tensor>>>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    op: &'static str,
    value: Tensor,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Ordered record of executed ops.
///
/// Ops are appended in execution order; [`Tape::backward`] walks them in
/// exact reverse and accumulates each op's contribution additively into its
/// parents. Ops that sit on a non-differentiable point (relu at 0, maxpool
/// ties, bilinear cell boundaries) report their distance to it through
/// [`Tape::note_kink`], which the gradient checker uses to reject samples.
pub struct Tape {
    nodes: Vec<Node>,
    kink_margin: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), kink_margin: f64::INFINITY }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.insert("leaf", value, Vec::new(), None, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.insert("constant", value, Vec::new(), None, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Appends an op result. Fails if `value` holds NaN or infinity.
    pub fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        parents: &[Var],
        backward: BackwardFn,
    ) -> Result<Var> {
        check_finite(op, &value)?;
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let parents = parents.iter().map(|p| p.0).collect();
        let backward = requires_grad.then_some(backward);
        Ok(self.insert(op, value, parents, backward, requires_grad))
    }

    fn insert(
        &mut self,
        op: &'static str,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
    ) -> Var {
        self.nodes.push(Node { op, value, parents, backward, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn note_kink(&mut self, margin: f64) {
        if margin < self.kink_margin {
            self.kink_margin = margin;
        }
    }

    /// Smallest distance to a non-differentiable point seen so far.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(loss_value.shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = node.backward.as_ref() else { continue };
            let Some(upstream) = grads[i].take() else { continue };
            let parent_values: Vec<&Tensor> =
                node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let contributions = backward(&upstream, &parent_values, &node.value);
            debug_assert_eq!(contributions.len(), node.parents.len());
            for (&p, g) in node.parents.iter().zip(contributions) {
                let Some(g) = g else { continue };
                if !self.nodes[p].requires_grad {
                    continue;
                }
                debug_assert_eq!(g.shape(), self.nodes[p].value.shape(), "op {}", node.op);
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[i] = Some(upstream);
        }
        Ok(Gradients { grads })
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any flowed into it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `v`; zeros when `v` is disconnected from the loss.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn disconnected_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.leaf(Tensor::from_vec(vec![3.0]));
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(&tape, y).data(), &[0.0]);
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.add(x, x).unwrap();
        let loss = tape.sum(y).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(&tape, x).data(), &[2.0, 2.0]);
    }
}
