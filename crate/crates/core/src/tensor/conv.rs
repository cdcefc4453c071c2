use super::{Result, Tape, Tensor, TensorError, Var};

/// Output extent of a convolution: `floor((extent + 2·padding − kernel) / stride) + 1`.
pub fn conv_output_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = extent + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output extent of a valid pooling window: `floor((extent − pool) / stride) + 1`.
pub fn pool_output_extent(extent: usize, pool: usize, stride: usize) -> Option<usize> {
    conv_output_extent(extent, pool, stride, 0)
}

/// Interprets `[H, W, C]` as a batch of one.
fn as_nhwc(shape: &[usize], op: &str) -> Result<[usize; 4]> {
    match *shape {
        [h, w, c] => Ok([1, h, w, c]),
        [n, h, w, c] => Ok([n, h, w, c]),
        _ => Err(TensorError::Dimension(format!("{op}: expected [N,H,W,C] or [H,W,C], got {shape:?}"))),
    }
}

fn with_batch_rank(input_rank: usize, n: usize, h: usize, w: usize, c: usize) -> Vec<usize> {
    if input_rank == 3 {
        vec![h, w, c]
    } else {
        vec![n, h, w, c]
    }
}

impl Tape {
    /// 2-D cross-correlation of `x` (`[N,H,W,C]`) with `kernels` (`[K,K,C,F]`)
    /// plus per-filter `bias` (`[F]`), zero padding on every side.
    pub fn conv2d(&mut self, x: Var, kernels: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let rank = self.shape(x).len();
        let [n, h, w, c] = as_nhwc(self.shape(x), "conv2d")?;
        let (k, f) = match *self.shape(kernels) {
            [k1, k2, kc, f] if k1 == k2 && kc == c => (k1, f),
            [_, _, kc, _] if kc != c => {
                return Err(TensorError::Dimension(format!(
                    "conv2d: input has {c} channels, kernels expect {kc}"
                )))
            }
            ref s => return Err(TensorError::Dimension(format!("conv2d: kernel shape {s:?} is not K×K×C×F"))),
        };
        if self.shape(bias) != [f] {
            return Err(TensorError::Dimension(format!(
                "conv2d: bias shape {:?}, expected [{f}]",
                self.shape(bias)
            )));
        }
        let (Some(oh), Some(ow)) = (
            conv_output_extent(h, k, stride, padding),
            conv_output_extent(w, k, stride, padding),
        ) else {
            return Err(TensorError::Dimension(format!(
                "conv2d: kernel {k} (stride {stride}, padding {padding}) does not fit {h}×{w}"
            )));
        };
        let geom = ConvGeom { n, h, w, c, k, f, oh, ow, stride, padding };
        let out = geom.forward(self.value(x).data(), self.value(kernels).data(), self.value(bias).data());
        let out = Tensor::new(&with_batch_rank(rank, n, oh, ow, f), out)?;
        self.push(
            "conv2d",
            out,
            &[x, kernels, bias],
            Box::new(move |g, p, _| {
                let (gx, gw, gb) = geom.backward(p[0].data(), p[1].data(), g.data());
                vec![
                    Some(Tensor::new(p[0].shape(), gx).expect("shape")),
                    Some(Tensor::new(p[1].shape(), gw).expect("shape")),
                    Some(Tensor::new(p[2].shape(), gb).expect("shape")),
                ]
            }),
        )
    }

    /// Max pooling over `pool × pool` windows. Backward routes each window's
    /// gradient to its first (row-major) maximum.
    pub fn maxpool2d(&mut self, x: Var, pool: usize, stride: usize) -> Result<Var> {
        let rank = self.shape(x).len();
        let [n, h, w, c] = as_nhwc(self.shape(x), "maxpool2d")?;
        let (Some(oh), Some(ow)) = (pool_output_extent(h, pool, stride), pool_output_extent(w, pool, stride))
        else {
            return Err(TensorError::Dimension(format!(
                "maxpool2d: pool {pool} (stride {stride}) exceeds spatial extent {h}×{w}"
            )));
        };
        let xd = self.value(x).data();
        let mut out = vec![0.0; n * oh * ow * c];
        let mut argmax = vec![0usize; out.len()];
        let mut margin = f64::INFINITY;
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut second = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for ky in 0..pool {
                            for kx in 0..pool {
                                let idx = ((b * h + oy * stride + ky) * w + ox * stride + kx) * c + ch;
                                let v = xd[idx];
                                if v > best {
                                    second = best;
                                    best = v;
                                    best_idx = idx;
                                } else if v > second {
                                    second = v;
                                }
                            }
                        }
                        if pool > 1 {
                            margin = margin.min(best - second);
                        }
                        let o = ((b * oh + oy) * ow + ox) * c + ch;
                        out[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
        }
        self.note_kink(margin);
        let out = Tensor::new(&with_batch_rank(rank, n, oh, ow, c), out)?;
        self.push(
            "maxpool2d",
            out,
            &[x],
            Box::new(move |g, p, _| {
                let mut gx = Tensor::zeros(p[0].shape());
                let gxd = gx.data_mut();
                for (o, &src) in argmax.iter().enumerate() {
                    gxd[src] += g.data()[o];
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(TensorError::Dimension("upsample factor must be ≥ 1".into()));
        }
        let rank = self.shape(x).len();
        let [n, h, w, c] = as_nhwc(self.shape(x), "upsample_nearest")?;
        let (oh, ow) = (h * factor, w * factor);
        let xd = self.value(x).data();
        let mut out = vec![0.0; n * oh * ow * c];
        for b in 0..n {
            for y in 0..oh {
                for xx in 0..ow {
                    let src = ((b * h + y / factor) * w + xx / factor) * c;
                    let dst = ((b * oh + y) * ow + xx) * c;
                    out[dst..dst + c].copy_from_slice(&xd[src..src + c]);
                }
            }
        }
        let out = Tensor::new(&with_batch_rank(rank, n, oh, ow, c), out)?;
        self.push(
            "upsample_nearest",
            out,
            &[x],
            Box::new(move |g, p, _| {
                let mut gx = Tensor::zeros(p[0].shape());
                let gxd = gx.data_mut();
                let gd = g.data();
                for b in 0..n {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let src = ((b * h + y / factor) * w + xx / factor) * c;
                            let dst = ((b * oh + y) * ow + xx) * c;
                            for ch in 0..c {
                                gxd[src + ch] += gd[dst + ch];
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    k: usize,
    f: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl ConvGeom {
    /// Input row/column for output coordinate `o` and kernel offset `kk`.
    #[inline]
    fn src(&self, o: usize, kk: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + kk) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    fn forward(&self, x: &[f64], wts: &[f64], bias: &[f64]) -> Vec<f64> {
        let &ConvGeom { n, h, w, c, k, f, oh, ow, .. } = self;
        let mut out = vec![0.0; n * oh * ow * f];
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = ((b * oh + oy) * ow + ox) * f;
                    let acc = &mut out[o..o + f];
                    acc.copy_from_slice(bias);
                    for ky in 0..k {
                        let Some(iy) = self.src(oy, ky, h) else { continue };
                        for kx in 0..k {
                            let Some(ix) = self.src(ox, kx, w) else { continue };
                            let xb = ((b * h + iy) * w + ix) * c;
                            let wb = (ky * k + kx) * c * f;
                            for ch in 0..c {
                                let xv = x[xb + ch];
                                let wr = &wts[wb + ch * f..wb + (ch + 1) * f];
                                for (a, &wv) in acc.iter_mut().zip(wr) {
                                    *a += xv * wv;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn backward(&self, x: &[f64], wts: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let &ConvGeom { n, h, w, c, k, f, oh, ow, .. } = self;
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; wts.len()];
        let mut gb = vec![0.0; f];
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o = ((b * oh + oy) * ow + ox) * f;
                    let go = &g[o..o + f];
                    for (a, &v) in gb.iter_mut().zip(go) {
                        *a += v;
                    }
                    for ky in 0..k {
                        let Some(iy) = self.src(oy, ky, h) else { continue };
                        for kx in 0..k {
                            let Some(ix) = self.src(ox, kx, w) else { continue };
                            let xb = ((b * h + iy) * w + ix) * c;
                            let wb = (ky * k + kx) * c * f;
                            for ch in 0..c {
                                let xv = x[xb + ch];
                                let wr = &wts[wb + ch * f..wb + (ch + 1) * f];
                                let mut acc = 0.0;
                                for (&wv, &gv) in wr.iter().zip(go) {
                                    acc += wv * gv;
                                }
                                gx[xb + ch] += acc;
                                let gwr = &mut gw[wb + ch * f..wb + (ch + 1) * f];
                                for (a, &gv) in gwr.iter_mut().zip(go) {
                                    *a += xv * gv;
                                }
                            }
                        }
                    }
                }
            }
        }
        (gx, gw, gb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ones_kernel_on_ones_input() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[3, 3, 1]));
        let k = tape.leaf(Tensor::ones(&[2, 2, 1, 1]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[2, 2, 1]);
        assert_eq!(tape.value(y).data(), &[4.0; 4]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let data: Vec<f64> = (0..20).map(|i| i as f64 * 0.37 - 2.0).collect();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[4, 5, 1], data.clone()).unwrap());
        let k = tape.leaf(Tensor::ones(&[1, 1, 1, 1]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), data.as_slice());
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[4, 4, 2]));
        let k = tape.leaf(Tensor::ones(&[3, 3, 1, 2]));
        let b = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.conv2d(x, k, b, 1, 0), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn maxpool_forward_and_argmax_routing() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[4.0]);
        let l = tape.sum(y).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(&tape, x).data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_ties_go_to_first_index() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::full(&[2, 2, 1], 7.0));
        let y = tape.maxpool2d(x, 2, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[7.0]);
        let l = tape.sum(y).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(&tape, x).data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_larger_than_input_fails() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[2, 2, 1]));
        assert!(matches!(tape.maxpool2d(x, 3, 3), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn paper_tower_shape_arithmetic() {
        let mut s = 500;
        for _ in 0..4 {
            s = conv_output_extent(s, 9, 1, 0).unwrap();
            s = pool_output_extent(s, 3, 3).unwrap();
        }
        assert_eq!(s, 2);
        assert_eq!(s * s * 256, 1024);
    }

    proptest! {
        #[test]
        fn output_shapes_follow_floor_formula(
            h in 3usize..14, w in 3usize..14, k in 1usize..4, stride in 1usize..3, pool in 1usize..3,
        ) {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::full(&[1, h, w, 2], 0.5));
            let kern = tape.leaf(Tensor::full(&[k, k, 2, 3], 0.1));
            let b = tape.leaf(Tensor::zeros(&[3]));
            let y = tape.conv2d(x, kern, b, stride, 0).unwrap();
            let (oh, ow) = ((h - k) / stride + 1, (w - k) / stride + 1);
            prop_assert_eq!(tape.shape(y), &[1, oh, ow, 3]);
            if pool <= oh && pool <= ow {
                let p = tape.maxpool2d(y, pool, pool).unwrap();
                prop_assert_eq!(tape.shape(p), &[1, (oh - pool) / pool + 1, (ow - pool) / pool + 1, 3]);
            }
        }

        #[test]
        fn maxpool_backward_preserves_gradient_mass(
            vals in proptest::collection::vec(-5.0f64..5.0, 36), up in proptest::collection::vec(-2.0f64..2.0, 9)
        ) {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::new(&[6, 6, 1], vals).unwrap());
            let y = tape.maxpool2d(x, 2, 2).unwrap();
            let upstream = Tensor::new(&[3, 3, 1], up.clone()).unwrap();
            let l = tape.dot_const(y, &upstream).unwrap();
            let g = tape.backward(l).unwrap();
            let total: f64 = up.iter().sum();
            prop_assert!((g.wrt(&tape, x).sum() - total).abs() < 1e-9);
        }
    }
}
