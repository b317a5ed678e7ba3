//! Encoder internals: layer norm, single-head self-attention, and a tanh
//! feed-forward block, each with a hand-derived backward pass.
//!
//! Everything runs in f64 and every activation is smooth, so analytic
//! gradients can be validated against central finite differences to tight
//! tolerances. Backward functions accumulate into caller-owned gradient
//! buffers; callers zero them between optimizer steps.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::{axpy, dot, linear_backward, linear_forward, softmax_in_place, Mat};

pub const LN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LnParams {
    pub fn identity(d: usize) -> LnParams {
        LnParams {
            gamma: vec![1.0; d],
            beta: vec![0.0; d],
        }
    }

    pub fn zeros(d: usize) -> LnParams {
        LnParams {
            gamma: vec![0.0; d],
            beta: vec![0.0; d],
        }
    }
}

pub struct LnCache {
    pub xhat: Mat,
    pub inv_std: Vec<f64>,
    pub out: Mat,
}

pub fn ln_forward(p: &LnParams, x: &Mat) -> LnCache {
    let d = x.cols;
    let mut xhat = Mat::zeros(x.rows, d);
    let mut out = Mat::zeros(x.rows, d);
    let mut inv_std = Vec::with_capacity(x.rows);
    for i in 0..x.rows {
        let xi = x.row(i);
        let mean = xi.iter().sum::<f64>() / d as f64;
        let var = xi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        let (xh, o) = (xhat.row_mut(i), out.row_mut(i));
        for k in 0..d {
            xh[k] = (xi[k] - mean) * is;
            o[k] = p.gamma[k] * xh[k] + p.beta[k];
        }
    }
    LnCache { xhat, inv_std, out }
}

/// Accumulates parameter gradients into `dp` and input gradients into `dx`.
pub fn ln_backward(p: &LnParams, cache: &LnCache, dout: &Mat, dp: &mut LnParams, dx: &mut Mat) {
    let d = dout.cols;
    for i in 0..dout.rows {
        let dy = dout.row(i);
        let xh = cache.xhat.row(i);
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for k in 0..d {
            let dxh = dy[k] * p.gamma[k];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[k];
            dp.gamma[k] += dy[k] * xh[k];
            dp.beta[k] += dy[k];
        }
        mean_dxh /= d as f64;
        mean_dxh_xh /= d as f64;
        let is = cache.inv_std[i];
        let dxi = dx.row_mut(i);
        for k in 0..d {
            let dxh = dy[k] * p.gamma[k];
            dxi[k] += is * (dxh - mean_dxh - xh[k] * mean_dxh_xh);
        }
    }
}

/// One pre-norm block: x + attn(ln1(x)), then + ff(ln2(·)).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1: LnParams,
    pub wq: Mat,
    pub bq: Vec<f64>,
    pub wk: Mat,
    pub bk: Vec<f64>,
    pub wv: Mat,
    pub bv: Vec<f64>,
    pub wo: Mat,
    pub bo: Vec<f64>,
    pub ln2: LnParams,
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

fn random_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let normal = Normal::new(0.0, INIT_STD).unwrap();
    Mat::from_fn(rows, cols, |_, _| normal.sample(rng))
}

impl LayerParams {
    pub fn init(d: usize, d_ff: usize, rng: &mut impl Rng) -> LayerParams {
        LayerParams {
            ln1: LnParams::identity(d),
            wq: random_mat(d, d, rng),
            bq: vec![0.0; d],
            wk: random_mat(d, d, rng),
            bk: vec![0.0; d],
            wv: random_mat(d, d, rng),
            bv: vec![0.0; d],
            wo: random_mat(d, d, rng),
            bo: vec![0.0; d],
            ln2: LnParams::identity(d),
            w1: random_mat(d_ff, d, rng),
            b1: vec![0.0; d_ff],
            w2: random_mat(d, d_ff, rng),
            b2: vec![0.0; d],
        }
    }

    pub fn zeros(d: usize, d_ff: usize) -> LayerParams {
        LayerParams {
            ln1: LnParams::zeros(d),
            wq: Mat::zeros(d, d),
            bq: vec![0.0; d],
            wk: Mat::zeros(d, d),
            bk: vec![0.0; d],
            wv: Mat::zeros(d, d),
            bv: vec![0.0; d],
            wo: Mat::zeros(d, d),
            bo: vec![0.0; d],
            ln2: LnParams::zeros(d),
            w1: Mat::zeros(d_ff, d),
            b1: vec![0.0; d_ff],
            w2: Mat::zeros(d, d_ff),
            b2: vec![0.0; d],
        }
    }
}

pub struct LayerCache {
    pub ln1: LnCache,
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    /// Row-stochastic attention matrix, one row per query position.
    pub attn: Mat,
    /// attn · v
    pub ctx: Mat,
    pub ln2: LnCache,
    /// tanh hidden activations of the feed-forward block.
    pub ffh: Mat,
}

pub fn layer_forward(p: &LayerParams, x: &Mat) -> (Mat, LayerCache) {
    let (l, d) = (x.rows, x.cols);
    let d_ff = p.w1.rows;
    let ln1 = ln_forward(&p.ln1, x);
    let mut q = Mat::zeros(l, d);
    let mut k = Mat::zeros(l, d);
    let mut v = Mat::zeros(l, d);
    for i in 0..l {
        linear_forward(&p.wq, &p.bq, ln1.out.row(i), q.row_mut(i));
        linear_forward(&p.wk, &p.bk, ln1.out.row(i), k.row_mut(i));
        linear_forward(&p.wv, &p.bv, ln1.out.row(i), v.row_mut(i));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut attn = Mat::zeros(l, l);
    for i in 0..l {
        let row = attn.row_mut(i);
        for j in 0..l {
            row[j] = dot(q.row(i), k.row(j)) * scale;
        }
        softmax_in_place(row);
    }
    let mut ctx = Mat::zeros(l, d);
    for i in 0..l {
        for j in 0..l {
            axpy(ctx.row_mut(i), attn.row(i)[j], v.row(j));
        }
    }
    let mut res1 = x.clone();
    let mut proj = vec![0.0; d];
    for i in 0..l {
        linear_forward(&p.wo, &p.bo, ctx.row(i), &mut proj);
        axpy(res1.row_mut(i), 1.0, &proj);
    }
    let ln2 = ln_forward(&p.ln2, &res1);
    let mut ffh = Mat::zeros(l, d_ff);
    let mut out = res1.clone();
    let mut f = vec![0.0; d];
    for i in 0..l {
        linear_forward(&p.w1, &p.b1, ln2.out.row(i), ffh.row_mut(i));
        for h in ffh.row_mut(i) {
            *h = h.tanh();
        }
        linear_forward(&p.w2, &p.b2, ffh.row(i), &mut f);
        axpy(out.row_mut(i), 1.0, &f);
    }
    (
        out,
        LayerCache {
            ln1,
            q,
            k,
            v,
            attn,
            ctx,
            ln2,
            ffh,
        },
    )
}

/// Returns the gradient w.r.t. the block input; parameter gradients
/// accumulate into `dp`.
pub fn layer_backward(p: &LayerParams, cache: &LayerCache, dout: &Mat, dp: &mut LayerParams) -> Mat {
    let (l, d) = (dout.rows, dout.cols);
    let d_ff = p.w1.rows;

    // out = res1 + W2·tanh(W1·ln2(res1) + b1) + b2
    let mut dres1 = dout.clone();
    let mut dln2out = Mat::zeros(l, d);
    let mut dh = vec![0.0; d_ff];
    for i in 0..l {
        dh.iter_mut().for_each(|x| *x = 0.0);
        linear_backward(&p.w2, cache.ffh.row(i), dout.row(i), &mut dp.w2, &mut dp.b2, &mut dh);
        let ffh = cache.ffh.row(i);
        for t in 0..d_ff {
            dh[t] *= 1.0 - ffh[t] * ffh[t];
        }
        linear_backward(&p.w1, cache.ln2.out.row(i), &dh, &mut dp.w1, &mut dp.b1, dln2out.row_mut(i));
    }
    ln_backward(&p.ln2, &cache.ln2, &dln2out, &mut dp.ln2, &mut dres1);

    // res1 = x + Wo·ctx + bo
    let mut dx = dres1.clone();
    let mut dctx = Mat::zeros(l, d);
    for i in 0..l {
        linear_backward(&p.wo, cache.ctx.row(i), dres1.row(i), &mut dp.wo, &mut dp.bo, dctx.row_mut(i));
    }

    // ctx_i = Σ_j attn_ij · v_j
    let mut dattn = Mat::zeros(l, l);
    let mut dv = Mat::zeros(l, d);
    for i in 0..l {
        for j in 0..l {
            dattn.row_mut(i)[j] = dot(dctx.row(i), cache.v.row(j));
            axpy(dv.row_mut(j), cache.attn.row(i)[j], dctx.row(i));
        }
    }

    // Softmax rows, then the 1/√d score scaling.
    let scale = 1.0 / (d as f64).sqrt();
    let mut dq = Mat::zeros(l, d);
    let mut dk = Mat::zeros(l, d);
    for i in 0..l {
        let (a, da) = (cache.attn.row(i), dattn.row(i));
        let inner = dot(a, da);
        for j in 0..l {
            let ds = a[j] * (da[j] - inner) * scale;
            if ds != 0.0 {
                axpy(dq.row_mut(i), ds, cache.k.row(j));
                axpy(dk.row_mut(j), ds, cache.q.row(i));
            }
        }
    }

    let mut dln1out = Mat::zeros(l, d);
    for i in 0..l {
        let y1 = cache.ln1.out.row(i);
        linear_backward(&p.wq, y1, dq.row(i), &mut dp.wq, &mut dp.bq, dln1out.row_mut(i));
        linear_backward(&p.wk, y1, dk.row(i), &mut dp.wk, &mut dp.bk, dln1out.row_mut(i));
        linear_backward(&p.wv, y1, dv.row(i), &mut dp.wv, &mut dp.bv, dln1out.row_mut(i));
    }
    ln_backward(&p.ln1, &cache.ln1, &dln1out, &mut dp.ln1, &mut dx);
    dx
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<LayerParams>,
    pub final_ln: LnParams,
}

impl EncoderParams {
    pub fn init(n_layers: usize, d: usize, d_ff: usize, rng: &mut impl Rng) -> EncoderParams {
        EncoderParams {
            layers: (0..n_layers).map(|_| LayerParams::init(d, d_ff, rng)).collect(),
            final_ln: LnParams::identity(d),
        }
    }

    pub fn zeros(n_layers: usize, d: usize, d_ff: usize) -> EncoderParams {
        EncoderParams {
            layers: (0..n_layers).map(|_| LayerParams::zeros(d, d_ff)).collect(),
            final_ln: LnParams::zeros(d),
        }
    }
}

pub struct EncoderCache {
    pub layers: Vec<LayerCache>,
    /// Final layer norm; its `out` field is the hidden-state matrix h.
    pub final_ln: LnCache,
}

pub fn encoder_forward(p: &EncoderParams, x0: &Mat) -> EncoderCache {
    let mut x = x0.clone();
    let mut layers = Vec::with_capacity(p.layers.len());
    for layer in &p.layers {
        let (next, cache) = layer_forward(layer, &x);
        layers.push(cache);
        x = next;
    }
    let final_ln = ln_forward(&p.final_ln, &x);
    EncoderCache { layers, final_ln }
}

/// Returns the gradient w.r.t. the embedded input x0.
pub fn encoder_backward(
    p: &EncoderParams,
    cache: &EncoderCache,
    dh: &Mat,
    dp: &mut EncoderParams,
) -> Mat {
    let mut dx = Mat::zeros(dh.rows, dh.cols);
    ln_backward(&p.final_ln, &cache.final_ln, dh, &mut dp.final_ln, &mut dx);
    for ((layer, lcache), dlayer) in p
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(dp.layers.iter_mut())
        .rev()
    {
        dx = layer_backward(layer, lcache, &dx, dlayer);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Central finite difference of a scalar function of one coordinate.
    fn central_diff(f: &mut dyn FnMut(f64) -> f64, x0: f64, eps: f64) -> f64 {
        (f(x0 + eps) - f(x0 - eps)) / (2.0 * eps)
    }

    #[test]
    fn ln_backward_matches_finite_differences() {
        let mut r = stream(11, "net-test", 0);
        let d = 6;
        let p = {
            let normal = Normal::new(0.0, 0.5).unwrap();
            LnParams {
                gamma: (0..d).map(|_| 1.0 + normal.sample(&mut r)).collect(),
                beta: (0..d).map(|_| normal.sample(&mut r)).collect(),
            }
        };
        let x = random_mat(3, d, &mut r);
        // Loss: weighted sum of outputs, weights fixed.
        let w = random_mat(3, d, &mut r);
        let loss = |p: &LnParams, x: &Mat| -> f64 {
            let c = ln_forward(p, x);
            c.out.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
        };
        let c = ln_forward(&p, &x);
        let mut dp = LnParams::zeros(d);
        let mut dx = Mat::zeros(3, d);
        ln_backward(&p, &c, &w, &mut dp, &mut dx);
        let eps = 1e-6;
        for idx in [0usize, 5, 10, 17] {
            let mut xp = x.clone();
            let got = dx.data[idx];
            let mut f = |v: f64| {
                xp.data[idx] = v;
                loss(&p, &xp)
            };
            let fd = central_diff(&mut f, x.data[idx], eps);
            assert!(
                (got - fd).abs() / fd.abs().max(got.abs()).max(1e-8) < 1e-5,
                "dx[{idx}]: analytic {got} vs fd {fd}"
            );
        }
        for k in 0..d {
            let mut pp = p.clone();
            let mut f = |v: f64| {
                pp.gamma[k] = v;
                loss(&pp, &x)
            };
            let fd = central_diff(&mut f, p.gamma[k], eps);
            let got = dp.gamma[k];
            assert!(
                (got - fd).abs() / fd.abs().max(got.abs()).max(1e-8) < 1e-5,
                "dgamma[{k}]: analytic {got} vs fd {fd}"
            );
        }
    }

    #[test]
    fn layer_backward_matches_finite_differences() {
        let mut r = stream(13, "net-test", 1);
        let (l, d, d_ff) = (4, 6, 10);
        let p = LayerParams::init(d, d_ff, &mut r);
        let x = random_mat(l, d, &mut r);
        let w = random_mat(l, d, &mut r);
        let loss = |p: &LayerParams, x: &Mat| -> f64 {
            let (out, _) = layer_forward(p, x);
            out.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = layer_forward(&p, &x);
        let mut dp = LayerParams::zeros(d, d_ff);
        let dx = layer_backward(&p, &cache, &w, &mut dp);
        let eps = 1e-6;
        // Input gradient.
        for idx in [0usize, 7, 13, 23] {
            let mut xp = x.clone();
            let mut f = |v: f64| {
                xp.data[idx] = v;
                loss(&p, &xp)
            };
            let fd = central_diff(&mut f, x.data[idx], eps);
            let got = dx.data[idx];
            assert!(
                (got - fd).abs() / fd.abs().max(got.abs()).max(1e-8) < 1e-4,
                "dx[{idx}]: analytic {got} vs fd {fd}"
            );
        }
        // A few parameter gradients from each tensor kind.
        macro_rules! check_mat {
            ($field:ident, $grad:expr, $idx:expr) => {{
                let idx = $idx;
                let mut pp = p.clone();
                let mut f = |v: f64| {
                    pp.$field.data[idx] = v;
                    loss(&pp, &x)
                };
                let fd = central_diff(&mut f, p.$field.data[idx], eps);
                let got = $grad.data[idx];
                assert!(
                    (got - fd).abs() / fd.abs().max(got.abs()).max(1e-8) < 1e-4,
                    concat!(stringify!($field), "[{}]: analytic {} vs fd {}"),
                    idx,
                    got,
                    fd
                );
            }};
        }
        check_mat!(wq, dp.wq, 5);
        check_mat!(wk, dp.wk, 11);
        check_mat!(wv, dp.wv, 17);
        check_mat!(wo, dp.wo, 23);
        check_mat!(w1, dp.w1, 29);
        check_mat!(w2, dp.w2, 31);
    }

    #[test]
    fn encoder_output_shape_and_determinism() {
        let mut r1 = stream(5, "net-test", 2);
        let mut r2 = stream(5, "net-test", 2);
        let p1 = EncoderParams::init(2, 8, 16, &mut r1);
        let p2 = EncoderParams::init(2, 8, 16, &mut r2);
        assert_eq!(p1, p2);
        let x = random_mat(5, 8, &mut r1);
        let c = encoder_forward(&p1, &x);
        assert_eq!(c.final_ln.out.rows, 5);
        assert_eq!(c.final_ln.out.cols, 8);
    }
}
