use crate::tensor::{Tape, Tensor, TensorError, Var};

use super::ImageError;

/// `similar·D² + (1 − similar)·max(0, margin − D)²` with `D = ‖e1 − e2‖₂`.
pub fn contrastive_loss(e1: &[f64], e2: &[f64], similar: bool, margin: f64) -> Result<f64, ImageError> {
    if e1.len() != e2.len() {
        return Err(ImageError::Tensor(TensorError::Dimension(format!(
            "contrastive_loss: embeddings of length {} and {}",
            e1.len(),
            e2.len()
        ))));
    }
    if margin <= 0.0 {
        return Err(ImageError::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    let d2: f64 = e1.iter().zip(e2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(if similar {
        d2
    } else {
        let gap = (margin - d2.sqrt()).max(0.0);
        gap * gap
    })
}

impl Tape {
    /// Mean contrastive loss over rows of `e1`, `e2` (`[N, d]`), one label per row.
    pub fn contrastive_loss(&mut self, e1: Var, e2: Var, similar: &[bool], margin: f64) -> Result<Var, TensorError> {
        let shape = self.shape(e1).to_vec();
        if shape != self.shape(e2) {
            return Err(TensorError::Dimension(format!(
                "contrastive_loss: shapes {shape:?} and {:?}",
                self.shape(e2)
            )));
        }
        let n = if shape.len() == 2 { shape[0] } else { 1 };
        if similar.len() != n {
            return Err(TensorError::Dimension(format!("contrastive_loss: {n} rows, {} labels", similar.len())));
        }
        let d = self.value(e1).len() / n;
        let (a, b) = (self.value(e1).data(), self.value(e2).data());
        let mut dist = Vec::with_capacity(n);
        let mut total = 0.0;
        let mut kink = f64::INFINITY;
        for r in 0..n {
            let d2: f64 = (0..d).map(|k| (a[r * d + k] - b[r * d + k]).powi(2)).sum();
            let dd = d2.sqrt();
            dist.push(dd);
            if similar[r] {
                total += d2;
            } else {
                let gap = (margin - dd).max(0.0);
                total += gap * gap;
                kink = kink.min(dd).min((margin - dd).abs());
            }
        }
        self.note_kink(kink);
        let labels = similar.to_vec();
        self.push(
            "contrastive_loss",
            Tensor::scalar(total / n as f64),
            &[e1, e2],
            Box::new(move |g, p, _| {
                let scale = g.item() / n as f64;
                let (a, b) = (p[0].data(), p[1].data());
                let mut ga = vec![0.0; a.len()];
                for r in 0..n {
                    // coefficient c so that d loss / d e1 = c · (e1 − e2)
                    let c = if labels[r] {
                        2.0
                    } else if dist[r] < margin && dist[r] > 0.0 {
                        -2.0 * (margin - dist[r]) / dist[r]
                    } else {
                        0.0
                    };
                    for k in 0..d {
                        ga[r * d + k] = scale * c * (a[r * d + k] - b[r * d + k]);
                    }
                }
                let gb: Vec<f64> = ga.iter().map(|v| -v).collect();
                vec![
                    Some(Tensor::new(p[0].shape(), ga).expect("shape")),
                    Some(Tensor::new(p[1].shape(), gb).expect("shape")),
                ]
            }),
        )
    }
}
