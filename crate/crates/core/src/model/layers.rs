use serde::{Deserialize, Serialize};

use crate::numerics::{gemm, Matrix, Rng};

pub const LN_EPS: f64 = 1e-5;

/// Affine map `y = x W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Matrix,
    pub b: Matrix,
}

impl Linear {
    /// Uniform fan-in initialization `U(-1/√in, 1/√in)`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.uniform_range(-bound, bound));
        Self { w, b: Matrix::zeros(1, fan_out) }
    }

    pub fn zeros_like(&self) -> Self {
        Self { w: Matrix::zeros(self.w.rows(), self.w.cols()), b: Matrix::zeros(1, self.b.cols()) }
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.mm(&self.w);
        y.add_row_broadcast(&self.b);
        y
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dx`.
    pub fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) -> Matrix {
        accumulate_tn(&mut grad.w, x, dy);
        grad.b.add_assign(&dy.column_sums());
        dy.nt(&self.w)
    }

    /// Like [`Linear::backward`] but skips the input gradient.
    pub fn backward_params(&self, x: &Matrix, dy: &Matrix, grad: &mut Linear) {
        accumulate_tn(&mut grad.w, x, dy);
        grad.b.add_assign(&dy.column_sums());
    }

    /// Sub-layer restricted to the rows and columns in `idx`.
    pub fn gather(&self, idx: &[usize]) -> Linear {
        Linear {
            w: Matrix::from_fn(idx.len(), idx.len(), |i, j| self.w.get(idx[i], idx[j])),
            b: self.b.select_columns(idx),
        }
    }

    /// Adds a gathered gradient back into the full-size positions.
    pub fn scatter_add(&mut self, sub: &Linear, idx: &[usize]) {
        for (i, &r) in idx.iter().enumerate() {
            for (j, &c) in idx.iter().enumerate() {
                let v = self.w.get(r, c) + sub.w.get(i, j);
                self.w.set(r, c, v);
            }
        }
        for (j, &c) in idx.iter().enumerate() {
            let v = self.b.get(0, c) + sub.b.get(0, j);
            self.b.set(0, c, v);
        }
    }
}

/// `acc += aᵀ b`.
pub(crate) fn accumulate_tn(acc: &mut Matrix, a: &Matrix, b: &Matrix) {
    let (m, k, n) = (a.cols(), a.rows(), b.cols());
    debug_assert_eq!(acc.shape(), (m, n));
    gemm(m, k, n, 1.0, a.data(), 1, m, b.data(), n, 1, 1.0, acc.data_mut(), n, 1);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Matrix,
    pub beta: Matrix,
}

#[derive(Debug, Clone)]
pub struct LnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self { gamma: Matrix::filled(1, width, 1.0), beta: Matrix::zeros(1, width) }
    }

    pub fn zeros_like(&self) -> Self {
        Self { gamma: Matrix::zeros(1, self.gamma.cols()), beta: Matrix::zeros(1, self.beta.cols()) }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LnCache) {
        let (rows, d) = x.shape();
        let mut xhat = Matrix::zeros(rows, d);
        let mut y = Matrix::zeros(rows, d);
        let mut inv_std = Vec::with_capacity(rows);
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        for i in 0..rows {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            let xh = xhat.row_mut(i);
            for (o, v) in xh.iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            let yr = y.row_mut(i);
            for j in 0..d {
                yr[j] = gamma[j] * xhat.get(i, j) + beta[j];
            }
        }
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LnCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        let (rows, d) = dy.shape();
        let gamma = self.gamma.data();
        let mut dx = Matrix::zeros(rows, d);
        let mut g = vec![0.0; d];
        for i in 0..rows {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            {
                let dg = grad.gamma.data_mut();
                for j in 0..d {
                    dg[j] += dyr[j] * xh[j];
                }
            }
            {
                let db = grad.beta.data_mut();
                for j in 0..d {
                    db[j] += dyr[j];
                }
            }
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for j in 0..d {
                g[j] = dyr[j] * gamma[j];
                mean_g += g[j];
                mean_gx += g[j] * xh[j];
            }
            mean_g /= d as f64;
            mean_gx /= d as f64;
            let is = cache.inv_std[i];
            let out = dx.row_mut(i);
            for j in 0..d {
                out[j] = is * (g[j] - mean_g - xh[j] * mean_gx);
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh-form GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// Layout of a token matrix: `batch` samples of `tokens` rows each, `heads`
/// contiguous column groups.
#[derive(Debug, Clone, Copy)]
pub struct AttnShape {
    pub batch: usize,
    pub tokens: usize,
    pub heads: usize,
    pub dim: usize,
}

impl AttnShape {
    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    fn offset(&self, b: usize, h: usize) -> usize {
        b * self.tokens * self.dim + h * self.head_dim()
    }
}

/// Scaled dot-product attention per sample and head. Returns the context
/// matrix and the row-stochastic attention weights (`batch · heads` blocks of `N × N`).
pub fn attention_forward(q: &Matrix, k: &Matrix, v: &Matrix, shape: AttnShape) -> (Matrix, Vec<f64>) {
    let n = shape.tokens;
    let dh = shape.head_dim();
    let d = shape.dim;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ctx = Matrix::zeros(q.rows(), d);
    let mut probs = vec![0.0; shape.batch * shape.heads * n * n];
    for b in 0..shape.batch {
        for h in 0..shape.heads {
            let off = shape.offset(b, h);
            let p = &mut probs[(b * shape.heads + h) * n * n..][..n * n];
            gemm(n, dh, n, scale, &q.data()[off..], d, 1, &k.data()[off..], 1, d, 0.0, p, n, 1);
            for row in p.chunks_exact_mut(n) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x /= sum;
                }
            }
            gemm(n, n, dh, 1.0, p, n, 1, &v.data()[off..], d, 1, 0.0, &mut ctx.data_mut()[off..], d, 1);
        }
    }
    (ctx, probs)
}

/// Gradients of [`attention_forward`] w.r.t. `q`, `k`, `v`.
pub fn attention_backward(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    probs: &[f64],
    dctx: &Matrix,
    shape: AttnShape,
) -> (Matrix, Matrix, Matrix) {
    let n = shape.tokens;
    let dh = shape.head_dim();
    let d = shape.dim;
    let scale = 1.0 / (dh as f64).sqrt();
    let rows = q.rows();
    let mut dq = Matrix::zeros(rows, d);
    let mut dk = Matrix::zeros(rows, d);
    let mut dv = Matrix::zeros(rows, d);
    let mut dp = vec![0.0; n * n];
    for b in 0..shape.batch {
        for h in 0..shape.heads {
            let off = shape.offset(b, h);
            let p = &probs[(b * shape.heads + h) * n * n..][..n * n];
            gemm(n, dh, n, 1.0, &dctx.data()[off..], d, 1, &v.data()[off..], 1, d, 0.0, &mut dp, n, 1);
            gemm(n, n, dh, 1.0, p, 1, n, &dctx.data()[off..], d, 1, 0.0, &mut dv.data_mut()[off..], d, 1);
            for (dprow, prow) in dp.chunks_exact_mut(n).zip(p.chunks_exact(n)) {
                let dot: f64 = dprow.iter().zip(prow).map(|(a, b)| a * b).sum();
                for (x, &pv) in dprow.iter_mut().zip(prow) {
                    *x = pv * (*x - dot);
                }
            }
            gemm(n, n, dh, scale, &dp, n, 1, &k.data()[off..], d, 1, 0.0, &mut dq.data_mut()[off..], d, 1);
            gemm(n, n, dh, scale, &dp, 1, n, &q.data()[off..], d, 1, 0.0, &mut dk.data_mut()[off..], d, 1);
        }
    }
    (dq, dk, dv)
}
