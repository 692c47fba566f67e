//! Layer primitives with hand-written reverse passes.
//!
//! Every `*_forward` returns the output plus the cache its `*_backward` needs.
//! Backward functions accumulate parameter gradients into the given gradient
//! tensors and return the gradient with respect to the layer input.

use super::params::{AttentionParams, LayerNormParams, Linear};
use super::tensor::{col_sum_acc, matmul_nn, matmul_nn_acc, matmul_nt, matmul_tn_acc, Mat, Scalar};

pub const LN_EPS: f64 = 1e-5;

pub fn linear_forward<S: Scalar>(l: &Linear<S>, x: &Mat<S>) -> Mat<S> {
    matmul_nt(x, &l.w, Some(&l.b))
}

/// Accumulates `∂w`, `∂b` and returns `∂x`.
pub fn linear_backward<S: Scalar>(l: &Linear<S>, g: &mut Linear<S>, x: &Mat<S>, dy: &Mat<S>) -> Mat<S> {
    matmul_tn_acc(dy, x, &mut g.w);
    col_sum_acc(dy, &mut g.b);
    matmul_nn(dy, &l.w)
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let k = S::from_f64(GELU_K);
    let half = S::from_f64(0.5);
    half * x * (S::one() + (c * (x + k * x * x * x)).tanh())
}

pub fn gelu_grad<S: Scalar>(x: S) -> S {
    let c = S::from_f64(GELU_C);
    let k = S::from_f64(GELU_K);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + three * k * x * x)
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<S> {
    pub xhat: Mat<S>,
    pub inv_std: Vec<S>,
}

/// Row-wise normalization to zero mean and unit (biased) variance, then
/// `gamma ⊙ x̂ + beta`.
pub fn layer_norm_forward<S: Scalar>(p: &LayerNormParams<S>, x: &Mat<S>) -> (Mat<S>, LayerNormCache<S>) {
    let d = S::from_f64(x.cols as f64);
    let eps = S::from_f64(LN_EPS);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut out = Mat::zeros(x.rows, x.cols);
    let mut inv_std = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<S>() / d;
        let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<S>() / d;
        let is = S::one() / (var + eps).sqrt();
        inv_std.push(is);
        let xh = xhat.row_mut(r);
        for (h, v) in xh.iter_mut().zip(row) {
            *h = (*v - mean) * is;
        }
        let o = out.row_mut(r);
        for c in 0..x.cols {
            o[c] = p.gamma.data[c] * xhat.data[r * x.cols + c] + p.beta.data[c];
        }
    }
    (out, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward<S: Scalar>(
    p: &LayerNormParams<S>,
    g: &mut LayerNormParams<S>,
    cache: &LayerNormCache<S>,
    dy: &Mat<S>,
) -> Mat<S> {
    let cols = dy.cols;
    let d = S::from_f64(cols as f64);
    let mut dx = Mat::zeros(dy.rows, cols);
    let mut dxhat = vec![S::zero(); cols];
    for r in 0..dy.rows {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        for c in 0..cols {
            g.gamma.data[c] += dyr[c] * xh[c];
            g.beta.data[c] += dyr[c];
            dxhat[c] = dyr[c] * p.gamma.data[c];
        }
        let mean_d = dxhat.iter().copied().sum::<S>() / d;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| *a * *b).sum::<S>() / d;
        let is = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..cols {
            out[c] = is * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub struct AttentionCache<S> {
    pub x: Mat<S>,
    pub q: Mat<S>,
    pub k: Mat<S>,
    pub v: Mat<S>,
    /// Softmax weights per head, `[S × S]` each.
    pub probs: Vec<Mat<S>>,
    pub o: Mat<S>,
}

/// Scaled dot-product self-attention over the rows of `x` (the sequence
/// axis), with `heads` equal column slices.
pub fn attention_forward<S: Scalar>(
    p: &AttentionParams<S>,
    x: &Mat<S>,
    heads: usize,
) -> (Mat<S>, AttentionCache<S>) {
    let q = linear_forward(&p.q, x);
    let k = linear_forward(&p.k, x);
    let v = linear_forward(&p.v, x);
    let seq = x.rows;
    let dh = x.cols / heads;
    let scale = S::from_f64(1.0 / (dh as f64).sqrt());
    let mut o = Mat::zeros(seq, x.cols);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let mut pm = Mat::zeros(seq, seq);
        for i in 0..seq {
            let qi = &q.row(i)[cols.clone()];
            let row = pm.row_mut(i);
            for j in 0..seq {
                row[j] = S::dot(qi, &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(row);
        }
        for i in 0..seq {
            for j in 0..seq {
                let w = pm.get(i, j);
                let vj = &v.row(j)[cols.clone()];
                S::axpy(w, vj, &mut o.row_mut(i)[cols.clone()]);
            }
        }
        probs.push(pm);
    }
    let y = linear_forward(&p.o, &o);
    (
        y,
        AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            probs,
            o,
        },
    )
}

fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

pub fn attention_backward<S: Scalar>(
    p: &AttentionParams<S>,
    g: &mut AttentionParams<S>,
    cache: &AttentionCache<S>,
    dy: &Mat<S>,
    heads: usize,
) -> Mat<S> {
    let seq = cache.x.rows;
    let width = cache.x.cols;
    let dh = width / heads;
    let scale = S::from_f64(1.0 / (dh as f64).sqrt());
    let d_o = linear_backward(&p.o, &mut g.o, &cache.o, dy);

    let mut dq = Mat::zeros(seq, width);
    let mut dk = Mat::zeros(seq, width);
    let mut dv = Mat::zeros(seq, width);
    let mut dp = vec![S::zero(); seq];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        let pm = &cache.probs[h];
        for i in 0..seq {
            let doi = &d_o.row(i)[cols.clone()];
            for j in 0..seq {
                dp[j] = S::dot(doi, &cache.v.row(j)[cols.clone()]);
                // dV_j += P_ij · dO_i
                S::axpy(pm.get(i, j), doi, &mut dv.row_mut(j)[cols.clone()]);
            }
            let pi = pm.row(i);
            let inner = S::dot(&dp, pi);
            for j in 0..seq {
                let ds = pi[j] * (dp[j] - inner) * scale;
                if ds == S::zero() {
                    continue;
                }
                S::axpy(ds, &cache.k.row(j)[cols.clone()], &mut dq.row_mut(i)[cols.clone()]);
                S::axpy(ds, &cache.q.row(i)[cols.clone()], &mut dk.row_mut(j)[cols.clone()]);
            }
        }
    }
    let mut dx = linear_backward(&p.q, &mut g.q, &cache.x, &dq);
    dx.add_assign(&linear_backward(&p.k, &mut g.k, &cache.x, &dk));
    dx.add_assign(&linear_backward(&p.v, &mut g.v, &cache.x, &dv));
    dx
}

/// `x · wᵀ` without bias, returning `∂x` and accumulating `∂w`.
pub fn projection_backward<S: Scalar>(w: &Mat<S>, gw: &mut Mat<S>, x: &Mat<S>, dy: &Mat<S>) -> Mat<S> {
    matmul_tn_acc(dy, x, gw);
    let mut dx = Mat::zeros(dy.rows, w.cols);
    matmul_nn_acc(dy, w, &mut dx);
    dx
}
