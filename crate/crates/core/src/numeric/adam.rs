use alloc::vec::Vec;
use num_traits::Float;

use super::matrix::Matrix;
use crate::error::{bail, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warmup length in steps; 0 disables warmup.
    pub warmup_steps: u64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, warmup_steps: 400 }
    }
}

impl AdamConfig {
    /// Learning rate for the 1-based `step`.
    pub fn learning_rate(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 || step >= self.warmup_steps {
            self.lr
        } else {
            self.lr * step as f64 / self.warmup_steps as f64
        }
    }
}

/// First/second moment accumulators mirroring the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes.into_iter().map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c))).unzip();
        Self { step: 0, m, v }
    }
}

/// One bias-corrected adaptive-moment update. Nothing is modified when any
/// gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut [&mut Matrix<T>],
    grads: &[&Matrix<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        bail!(Shape, "{} parameters, {} gradients, {} optimizer slots", params.len(), grads.len(), state.m.len());
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if !p.same_shape(g) || !p.same_shape(&state.m[i]) {
            bail!(Shape, "tensor {i}: parameter {:?}, gradient {:?}", p.shape(), g.shape());
        }
        if !g.all_finite() {
            bail!(Training, "non-finite gradient in tensor {i}");
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let lr = cfg.learning_rate(state.step);
    let c1 = 1.0 - Float::powf(cfg.beta1, t);
    let c2 = 1.0 - Float::powf(cfg.beta2, t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (lr, eps) = (T::from_f64(lr), T::from_f64(cfg.eps));
    let (c1, c2) = (T::from_f64(c1), T::from_f64(c2));
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (T::one() - b1) * g[j];
            v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
