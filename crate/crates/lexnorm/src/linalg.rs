//! Minimal dense f64 matrix used by the student and the aggregation network.
//!
//! Every linear map is stored row-per-output (`rows` = out, `cols` = in), so
//! the hot loops — `y[o] = W.row(o) · x` forward, `dW.row(o) += dy[o] * x` and
//! `dx += dy[o] * W.row(o)` backward — all walk contiguous memory.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += a * x
#[inline]
pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// out[o] = W.row(o) · x + b[o]
pub fn linear_forward(w: &Mat, b: &[f64], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.cols, x.len());
    debug_assert_eq!(w.rows, out.len());
    debug_assert_eq!(b.len(), out.len());
    for o in 0..w.rows {
        out[o] = dot(w.row(o), x) + b[o];
    }
}

/// Accumulates dW.row(o) += dy[o] * x, db[o] += dy[o], dx += dy[o] * W.row(o).
pub fn linear_backward(
    w: &Mat,
    x: &[f64],
    dy: &[f64],
    dw: &mut Mat,
    db: &mut [f64],
    dx: &mut [f64],
) {
    for o in 0..w.rows {
        let g = dy[o];
        if g == 0.0 {
            continue;
        }
        axpy(dw.row_mut(o), g, x);
        db[o] += g;
        axpy(dx, g, w.row(o));
    }
}

/// In-place numerically safe softmax; returns the log-sum-exp so callers can
/// form log-probabilities as `logit - lse`.
pub fn softmax_in_place(x: &mut [f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in x.iter_mut() {
        *v *= inv;
    }
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_round_trip() {
        let w = Mat::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let b = [1.0, -1.0];
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 2];
        linear_forward(&w, &b, &x, &mut y);
        assert_eq!(y, [9.0, 25.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut x = [1.0, 2.0, 3.0, -5.0];
        softmax_in_place(&mut x);
        let s: f64 = x.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
