//! Spatial transformer: affine grid generation, bilinear sampling and the
//! localisation network that predicts one transform per image.

use crate::tensor::{glorot_uniform, Activation, BoundParams, ParamStore, Rng, Tape, Tensor, TensorError, Var};

use super::ImageError;

/// Sample coordinates this close to an integer are snapped onto it, so grid
/// aligned transforms read pixels exactly.
const SNAP: f64 = 1e-9;

/// 2×3 affine map from output to input normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTheta(pub [[f64; 3]; 2]);

impl AffineTheta {
    pub const IDENTITY: AffineTheta = AffineTheta([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    pub fn rotation(radians: f64) -> Self {
        let (s, c) = radians.sin_cos();
        AffineTheta([[c, -s, 0.0], [s, c, 0.0]])
    }

    /// Shifts sampling by whole pixels on a `height × width` grid.
    pub fn pixel_shift(dx: f64, dy: f64, height: usize, width: usize) -> Self {
        let tx = 2.0 * dx / (width as f64 - 1.0);
        let ty = 2.0 * dy / (height as f64 - 1.0);
        AffineTheta([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    pub fn flat(&self) -> [f64; 6] {
        let [a, b] = self.0;
        [a[0], a[1], a[2], b[0], b[1], b[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }
}

#[inline]
fn normalized(i: usize, extent: usize) -> f64 {
    if extent == 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (extent - 1) as f64
    }
}

#[inline]
fn snap(p: f64) -> f64 {
    let r = p.round();
    if (p - r).abs() < SNAP {
        r
    } else {
        p
    }
}

/// One sample point: source pixel coordinates and their derivatives.
struct Sample {
    px: f64,
    py: f64,
    xn: f64,
    yn: f64,
}

fn sample_point(theta: &[f64], i: usize, j: usize, h: usize, w: usize) -> Sample {
    let xn = normalized(j, w);
    let yn = normalized(i, h);
    let xs = theta[0] * xn + theta[1] * yn + theta[2];
    let ys = theta[3] * xn + theta[4] * yn + theta[5];
    let px = snap((xs + 1.0) * (w as f64 - 1.0) / 2.0);
    let py = snap((ys + 1.0) * (h as f64 - 1.0) / 2.0);
    Sample { px, py, xn, yn }
}

impl Tape {
    /// Bilinear sampling of `x` (`[N,H,W,C]`) on the grid generated by
    /// per-image affine transforms `theta` (`[N,6]`, row-major 2×3), using
    /// align-corners coordinates in `[-1, 1]` and zero padding outside.
    pub fn grid_sample(&mut self, x: Var, theta: Var) -> Result<Var, TensorError> {
        let [n, h, w, c] = match *self.shape(x) {
            [n, h, w, c] => [n, h, w, c],
            ref s => return Err(TensorError::Dimension(format!("grid_sample: input {s:?} is not [N,H,W,C]"))),
        };
        if self.shape(theta) != [n, 6] {
            return Err(TensorError::Dimension(format!(
                "grid_sample: theta {:?}, expected [{n}, 6]",
                self.shape(theta)
            )));
        }
        let xd = self.value(x).data();
        let td = self.value(theta).data();
        let mut out = vec![0.0; xd.len()];
        let mut margin = f64::INFINITY;
        let sx = (w as f64 - 1.0) / 2.0;
        let sy = (h as f64 - 1.0) / 2.0;
        for b in 0..n {
            let th = &td[b * 6..b * 6 + 6];
            for i in 0..h {
                for j in 0..w {
                    let s = sample_point(th, i, j, h, w);
                    // a unit change in one theta entry moves a coordinate by at most sx (sy) pixels
                    margin = margin
                        .min((s.px - s.px.round()).abs() / sx.max(1e-12))
                        .min((s.py - s.py.round()).abs() / sy.max(1e-12));
                    let o = ((b * h + i) * w + j) * c;
                    for (wt, idx) in corners(&s, b, h, w, c) {
                        for ch in 0..c {
                            out[o + ch] += wt * xd[idx + ch];
                        }
                    }
                }
            }
        }
        self.note_kink(margin);
        let out = Tensor::new(&[n, h, w, c], out)?;
        self.push(
            "grid_sample",
            out,
            &[x, theta],
            Box::new(move |g, p, _| {
                let (xd, td) = (p[0].data(), p[1].data());
                let gd = g.data();
                let mut gx = vec![0.0; xd.len()];
                let mut gt = vec![0.0; td.len()];
                for b in 0..n {
                    let th = &td[b * 6..b * 6 + 6];
                    for i in 0..h {
                        for j in 0..w {
                            let s = sample_point(th, i, j, h, w);
                            let o = ((b * h + i) * w + j) * c;
                            for (wt, idx) in corners(&s, b, h, w, c) {
                                for ch in 0..c {
                                    gx[idx + ch] += wt * gd[o + ch];
                                }
                            }
                            // d(out)/d(px), d(out)/d(py) from the four corner values
                            let x0 = s.px.floor();
                            let y0 = s.py.floor();
                            let wx = s.px - x0;
                            let wy = s.py - y0;
                            let (x0, y0) = (x0 as isize, y0 as isize);
                            let mut dpx = 0.0;
                            let mut dpy = 0.0;
                            for ch in 0..c {
                                let v = |yy: isize, xx: isize| -> f64 {
                                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                        0.0
                                    } else {
                                        xd[((b * h + yy as usize) * w + xx as usize) * c + ch]
                                    }
                                };
                                let (v00, v01, v10, v11) = (v(y0, x0), v(y0, x0 + 1), v(y0 + 1, x0), v(y0 + 1, x0 + 1));
                                let go = gd[o + ch];
                                dpx += go * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
                                dpy += go * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
                            }
                            let gtb = &mut gt[b * 6..b * 6 + 6];
                            gtb[0] += dpx * sx * s.xn;
                            gtb[1] += dpx * sx * s.yn;
                            gtb[2] += dpx * sx;
                            gtb[3] += dpy * sy * s.xn;
                            gtb[4] += dpy * sy * s.yn;
                            gtb[5] += dpy * sy;
                        }
                    }
                }
                vec![
                    Some(Tensor::new(p[0].shape(), gx).expect("shape")),
                    Some(Tensor::new(p[1].shape(), gt).expect("shape")),
                ]
            }),
        )
    }
}

/// In-bounds bilinear corners as `(weight, flat index of channel 0)`.
fn corners(s: &Sample, b: usize, h: usize, w: usize, c: usize) -> impl Iterator<Item = (f64, usize)> {
    let x0 = s.px.floor();
    let y0 = s.py.floor();
    let wx = s.px - x0;
    let wy = s.py - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    [(0isize, 0isize, (1.0 - wy) * (1.0 - wx)), (0, 1, (1.0 - wy) * wx), (1, 0, wy * (1.0 - wx)), (1, 1, wy * wx)]
        .into_iter()
        .filter_map(move |(dy, dx, wt)| {
            let (yy, xx) = (y0 + dy, x0 + dx);
            if wt == 0.0 || yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                None
            } else {
                Some((wt, ((b * h + yy as usize) * w + xx as usize) * c))
            }
        })
}

/// Applies a fixed affine transform to one `[H, W, 1]` image.
pub fn stn_transform(image: &Tensor, theta: &AffineTheta) -> Result<Tensor, ImageError> {
    if !theta.is_finite() {
        return Err(ImageError::Tensor(TensorError::NonFinite { op: "stn_transform" }));
    }
    let shape = image.shape().to_vec();
    let batched = match shape.as_slice() {
        [h, w, c] => image.clone().reshape(&[1, *h, *w, *c])?,
        [h, w] => image.clone().reshape(&[1, *h, *w, 1])?,
        s => return Err(ImageError::Tensor(TensorError::Dimension(format!("stn_transform: image shape {s:?}")))),
    };
    let mut tape = Tape::new();
    let x = tape.constant(batched);
    let t = tape.constant(Tensor::new(&[1, 6], theta.flat().to_vec())?);
    let y = tape.grid_sample(x, t)?;
    Ok(tape.value(y).clone().reshape(&shape)?)
}

/// Layer sizes of the localisation network.
pub const LOC_FILTERS: [usize; 2] = [8, 10];
pub const LOC_KERNEL: usize = 5;
pub const LOC_POOL: usize = 2;
pub const LOC_HIDDEN: usize = 32;

/// Flattened feature size the localisation network produces for an input.
pub fn localiser_flatten_dim(input: (usize, usize)) -> Result<usize, ImageError> {
    let (mut h, mut w) = input;
    for (i, _) in LOC_FILTERS.iter().enumerate() {
        let fits = h >= LOC_KERNEL && w >= LOC_KERNEL && (h - LOC_KERNEL + 1) >= LOC_POOL && (w - LOC_KERNEL + 1) >= LOC_POOL;
        if !fits {
            return Err(ImageError::Config {
                layer: format!("stn.conv{}", i + 1),
                detail: format!("localisation kernel {LOC_KERNEL} / pool {LOC_POOL} does not fit {h}×{w}"),
            });
        }
        h = (h - LOC_KERNEL + 1 - LOC_POOL) / LOC_POOL + 1;
        w = (w - LOC_KERNEL + 1 - LOC_POOL) / LOC_POOL + 1;
    }
    Ok(h * w * LOC_FILTERS[1])
}

/// Initializes localisation parameters under the `stn.` prefix. The final
/// layer starts with zero weights and identity bias, so the untrained network
/// predicts the identity transform for every input.
pub(crate) fn init_localiser(store: &mut ParamStore, input: (usize, usize), rng: &mut Rng) -> Result<(), ImageError> {
    let flat = localiser_flatten_dim(input)?;
    let mut in_c = 1;
    for (i, &f) in LOC_FILTERS.iter().enumerate() {
        let k = LOC_KERNEL;
        store.insert(format!("stn.conv{}.w", i + 1), glorot_uniform(&[k, k, in_c, f], k * k * in_c, k * k * f, rng));
        store.insert(format!("stn.conv{}.b", i + 1), Tensor::zeros(&[f]));
        in_c = f;
    }
    store.insert("stn.fc1.w", glorot_uniform(&[LOC_HIDDEN, flat], flat, LOC_HIDDEN, rng));
    store.insert("stn.fc1.b", Tensor::zeros(&[LOC_HIDDEN]));
    store.insert("stn.fc2.w", Tensor::zeros(&[6, LOC_HIDDEN]));
    store.insert("stn.fc2.b", Tensor::from_vec(AffineTheta::IDENTITY.flat().to_vec()));
    Ok(())
}

/// Predicts `theta` for a batch `[N,H,W,1]` and resamples it.
pub(crate) fn apply_localiser(tape: &mut Tape, params: &BoundParams, x: Var) -> Result<Var, TensorError> {
    let mut h = x;
    for i in 1..=LOC_FILTERS.len() {
        h = tape.conv2d(h, params.var(&format!("stn.conv{i}.w"))?, params.var(&format!("stn.conv{i}.b"))?, 1, 0)?;
        h = tape.maxpool2d(h, LOC_POOL, LOC_POOL)?;
        h = tape.relu(h)?;
    }
    let n = tape.shape(h)[0];
    let flat = tape.value(h).len() / n;
    let h = tape.reshape(h, &[n, flat])?;
    let h = tape.dense(h, params.var("stn.fc1.w")?, params.var("stn.fc1.b")?, Activation::Relu)?;
    let theta = tape.dense(h, params.var("stn.fc2.w")?, params.var("stn.fc2.b")?, Activation::None)?;
    tape.grid_sample(x, theta)
}
