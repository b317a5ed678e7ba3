//! Shared optimizer machinery: a flat view over a model's parameter tensors
//! and an Adam implementation with per-group learning rates.
//!
//! Models expose their parameters as an ordered list of [`TensorMut`] views;
//! the order is the model's contract and must be stable, because optimizer
//! state, gradients, and checkpoints are all aligned by it.

/// Mutable view of one named parameter tensor.
pub struct TensorMut<'a> {
    pub name: String,
    /// Index into the caller's learning-rate table.
    pub group: usize,
    pub shape: Vec<usize>,
    pub data: &'a mut Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam state (first/second moments per tensor, shared step counter).
/// Buffers are sized lazily on the first step so construction needs no model
/// access; one state instance must only ever see one model's tensor list.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> AdamState {
        AdamState::default()
    }

    /// One update. `params` and `grads` must enumerate the same tensors in
    /// the same order. Gradients are consumed: each buffer is zeroed after
    /// use so the caller can re-accumulate into it.
    pub fn step(&mut self, lrs: &[f64], params: &mut [TensorMut], grads: &mut [TensorMut]) {
        assert_eq!(params.len(), grads.len(), "param/grad tensor lists differ");
        if self.m.is_empty() {
            self.m = params.iter().map(|t| vec![0.0; t.data.len()]).collect();
            self.v = params.iter().map(|t| vec![0.0; t.data.len()]).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads.iter_mut()).enumerate() {
            debug_assert_eq!(p.name, g.name);
            let lr = lrs[p.group];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p.data[j] -= lr * mhat / (vhat.sqrt() + EPS);
                g.data[j] = 0.0;
            }
        }
    }
}
