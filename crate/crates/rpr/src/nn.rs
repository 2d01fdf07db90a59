//! Minimal CPU convolutional network machinery: im2col convolutions,
//! ReLU, 2x2 max-pooling, global average pooling, a linear head and an
//! Adam optimizer. Everything is f32, single-threaded and bitwise
//! deterministic.

use ndarray::{Array1, Array2, Array4, ArrayView3, Axis, s};
use rand::Rng;
use rand_distr::StandardNormal;

/// One trainable array with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
    pub grad_weight: Array2<f32>,
    pub grad_bias: Array1<f32>,
}

impl Dense {
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / in_dim as f64).sqrt() as f32;
        Dense {
            weight: Array2::from_shape_fn((out_dim, in_dim), |_| {
                rng.sample::<f32, _>(StandardNormal) * std
            }),
            bias: Array1::zeros(out_dim),
            grad_weight: Array2::zeros((out_dim, in_dim)),
            grad_bias: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array2<f32>) -> Array2<f32> {
        x.dot(&self.weight.t()) + &self.bias
    }

    /// Accumulates parameter gradients, returns dx.
    pub fn backward(&mut self, x: &Array2<f32>, dy: &Array2<f32>) -> Array2<f32> {
        self.grad_weight += &dy.t().dot(x);
        self.grad_bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

/// 3x3 convolution, padding 1, configurable stride, ReLU fused by the
/// caller. Weights stored [out_ch, in_ch * 9] for direct GEMM against
/// im2col patches.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub stride: usize,
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
    pub grad_weight: Array2<f32>,
    pub grad_bias: Array1<f32>,
}

pub const KERNEL: usize = 3;
pub const PAD: usize = 1;

impl Conv2d {
    pub fn init(in_ch: usize, out_ch: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_ch * KERNEL * KERNEL;
        let std = (2.0 / fan_in as f64).sqrt() as f32;
        Conv2d {
            in_ch,
            out_ch,
            stride,
            weight: Array2::from_shape_fn((out_ch, fan_in), |_| {
                rng.sample::<f32, _>(StandardNormal) * std
            }),
            bias: Array1::zeros(out_ch),
            grad_weight: Array2::zeros((out_ch, fan_in)),
            grad_bias: Array1::zeros(out_ch),
        }
    }

    pub fn out_side(&self, in_side: usize) -> usize {
        (in_side + 2 * PAD - KERNEL) / self.stride + 1
    }

    fn im2col(&self, x: ArrayView3<f32>, out_side: usize) -> Array2<f32> {
        let (c, h, w) = x.dim();
        let mut col = Array2::<f32>::zeros((c * KERNEL * KERNEL, out_side * out_side));
        for ci in 0..c {
            for kr in 0..KERNEL {
                for kc in 0..KERNEL {
                    let row_idx = (ci * KERNEL + kr) * KERNEL + kc;
                    let mut row = col.row_mut(row_idx);
                    for or in 0..out_side {
                        let ir = (or * self.stride + kr) as isize - PAD as isize;
                        if ir < 0 || ir >= h as isize {
                            continue;
                        }
                        for oc in 0..out_side {
                            let ic = (oc * self.stride + kc) as isize - PAD as isize;
                            if ic < 0 || ic >= w as isize {
                                continue;
                            }
                            row[or * out_side + oc] = x[[ci, ir as usize, ic as usize]];
                        }
                    }
                }
            }
        }
        col
    }

    pub fn forward(&self, x: &Array4<f32>) -> Array4<f32> {
        let (n, _c, h, _w) = x.dim();
        let out_side = self.out_side(h);
        let mut y = Array4::<f32>::zeros((n, self.out_ch, out_side, out_side));
        for ni in 0..n {
            let col = self.im2col(x.index_axis(Axis(0), ni), out_side);
            let prod = self.weight.dot(&col);
            let mut yi = y.index_axis_mut(Axis(0), ni);
            for ci in 0..self.out_ch {
                let b = self.bias[ci];
                let src = prod.row(ci);
                let mut dst = yi.index_axis_mut(Axis(0), ci);
                let dst_flat = dst.as_slice_mut().expect("contiguous");
                for (d, &s) in dst_flat.iter_mut().zip(src.iter()) {
                    *d = s + b;
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients, returns dx.
    pub fn backward(&mut self, x: &Array4<f32>, dy: &Array4<f32>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let out_side = dy.dim().2;
        let mut dx = Array4::<f32>::zeros((n, c, h, w));
        for ni in 0..n {
            let col = self.im2col(x.index_axis(Axis(0), ni), out_side);
            let dyi = dy
                .index_axis(Axis(0), ni)
                .to_shape((self.out_ch, out_side * out_side))
                .expect("contiguous")
                .to_owned();
            self.grad_weight += &dyi.dot(&col.t());
            self.grad_bias += &dyi.sum_axis(Axis(1));
            let dcol = self.weight.t().dot(&dyi);
            // col2im: scatter-add patch gradients back onto the input.
            let mut dxi = dx.index_axis_mut(Axis(0), ni);
            for ci in 0..c {
                for kr in 0..KERNEL {
                    for kc in 0..KERNEL {
                        let row_idx = (ci * KERNEL + kr) * KERNEL + kc;
                        let row = dcol.row(row_idx);
                        for or in 0..out_side {
                            let ir = (or * self.stride + kr) as isize - PAD as isize;
                            if ir < 0 || ir >= h as isize {
                                continue;
                            }
                            for oc in 0..out_side {
                                let ic = (oc * self.stride + kc) as isize - PAD as isize;
                                if ic < 0 || ic >= w as isize {
                                    continue;
                                }
                                dxi[[ci, ir as usize, ic as usize]] += row[or * out_side + oc];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

pub fn relu(x: &Array4<f32>) -> Array4<f32> {
    x.mapv(|v| v.max(0.0))
}

/// dx given the forward *output* (y > 0 iff x > 0 for ReLU).
pub fn relu_backward(y: &Array4<f32>, dy: &Array4<f32>) -> Array4<f32> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &yv| {
        if yv <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// 2x2 max pool, stride 2. Returns pooled values and flat argmax
/// offsets (0..4) for backward.
pub fn maxpool2(x: &Array4<f32>) -> (Array4<f32>, Array4<u8>) {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array4::<f32>::zeros((n, c, oh, ow));
    let mut arg = Array4::<u8>::zeros((n, c, oh, ow));
    for ni in 0..n {
        for ci in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_k = 0u8;
                    for k in 0..4usize {
                        let v = x[[ni, ci, 2 * r + k / 2, 2 * col + k % 2]];
                        if v > best {
                            best = v;
                            best_k = k as u8;
                        }
                    }
                    y[[ni, ci, r, col]] = best;
                    arg[[ni, ci, r, col]] = best_k;
                }
            }
        }
    }
    (y, arg)
}

pub fn maxpool2_backward(arg: &Array4<u8>, dy: &Array4<f32>, in_hw: (usize, usize)) -> Array4<f32> {
    let (n, c, oh, ow) = dy.dim();
    let mut dx = Array4::<f32>::zeros((n, c, in_hw.0, in_hw.1));
    for ni in 0..n {
        for ci in 0..c {
            for r in 0..oh {
                for col in 0..ow {
                    let k = arg[[ni, ci, r, col]] as usize;
                    dx[[ni, ci, 2 * r + k / 2, 2 * col + k % 2]] += dy[[ni, ci, r, col]];
                }
            }
        }
    }
    dx
}

/// Global average pool over the spatial axes: [n,c,h,w] -> [n,c].
pub fn global_avg_pool(x: &Array4<f32>) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f32;
    let mut y = Array2::<f32>::zeros((n, c));
    for ni in 0..n {
        for ci in 0..c {
            y[[ni, ci]] = x.slice(s![ni, ci, .., ..]).sum() * scale;
        }
    }
    y
}

pub fn global_avg_pool_backward(dy: &Array2<f32>, in_hw: (usize, usize)) -> Array4<f32> {
    let (n, c) = dy.dim();
    let scale = 1.0 / (in_hw.0 * in_hw.1) as f32;
    Array4::from_shape_fn((n, c, in_hw.0, in_hw.1), |(ni, ci, _, _)| {
        dy[[ni, ci]] * scale
    })
}

/// Epsilon added to the norm denominator so all-zero pre-embeddings
/// stay finite.
pub const NORM_EPS: f32 = 1e-12;

/// Row-wise L2 normalization; returns (y, norms) with norms including
/// the epsilon guard.
pub fn l2_normalize(x: &Array2<f32>) -> (Array2<f32>, Array1<f32>) {
    let (n, _d) = x.dim();
    let mut norms = Array1::<f32>::zeros(n);
    let mut y = x.clone();
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt() + NORM_EPS;
        norms[i] = norm;
        row.mapv_inplace(|v| v / norm);
    }
    (y, norms)
}

pub fn l2_normalize_backward(
    y: &Array2<f32>,
    norms: &Array1<f32>,
    dy: &Array2<f32>,
) -> Array2<f32> {
    let mut dx = dy.clone();
    for i in 0..y.nrows() {
        let yr = y.row(i);
        let proj = yr.dot(&dy.row(i));
        let mut dr = dx.row_mut(i);
        for k in 0..yr.len() {
            dr[k] = (dy[[i, k]] - yr[k] * proj) / norms[i];
        }
    }
    dx
}

/// Adam with per-parameter first/second moment state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    /// Completed steps (for bias correction).
    pub step: u64,
    /// One (m, v) pair per registered parameter slice, flattened.
    pub moments: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(learning_rate: f32, param_sizes: &[usize]) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: param_sizes
                .iter()
                .map(|&n| (vec![0.0; n], vec![0.0; n]))
                .collect(),
        }
    }

    /// Apply one update. `params[i]` and `grads[i]` are flat slices of
    /// equal length, in registration order.
    pub fn apply(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]]) {
        assert_eq!(params.len(), self.moments.len());
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - (self.beta1 as f64).powf(t);
        let bc2 = 1.0 - (self.beta2 as f64).powf(t);
        let alpha = (self.learning_rate as f64 * bc2.sqrt() / bc1) as f32;
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.moments.iter_mut()) {
            assert_eq!(p.len(), g.len());
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= alpha * m[k] / (v[k].sqrt() + self.epsilon);
            }
        }
    }
}
