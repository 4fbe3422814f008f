use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{bail, Result};
use crate::Real;

/// Added to the variance inside the square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    /// Standardized input, before gain and bias.
    pub normalized: Matrix<T>,
    pub inv_std: Vec<T>,
}

/// Per-row standardization followed by `gain ⊙ x̂ + bias`; gain and bias are
/// `1 × width`.
pub fn layer_norm<T: Real>(
    x: &Matrix<T>,
    gain: &Matrix<T>,
    bias: &Matrix<T>,
) -> Result<(Matrix<T>, LayerNormCache<T>)> {
    let width = x.cols();
    if width == 0 {
        bail!(Shape, "layer norm over zero-width rows");
    }
    if gain.shape() != (1, width) || bias.shape() != (1, width) {
        bail!(Shape, "layer norm parameters {:?}/{:?} for width {width}", gain.shape(), bias.shape());
    }
    let n = T::from_f64(width as f64);
    let eps = T::from_f64(LAYER_NORM_EPS);
    let mut normalized = Matrix::zeros(x.rows(), width);
    let mut y = Matrix::zeros(x.rows(), width);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        inv_std.push(inv);
        let xhat = normalized.row_mut(r);
        for (h, &v) in xhat.iter_mut().zip(row) {
            *h = (v - mean) * inv;
        }
        let xhat = normalized.row(r);
        for (c, out) in y.row_mut(r).iter_mut().enumerate() {
            *out = xhat[c] * gain.data()[c] + bias.data()[c];
        }
    }
    Ok((y, LayerNormCache { normalized, inv_std }))
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gain: &Matrix<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
    let (rows, width) = cache.normalized.shape();
    if dy.shape() != (rows, width) || gain.shape() != (1, width) {
        bail!(Shape, "layer norm backward with upstream {:?}, cache {:?}", dy.shape(), (rows, width));
    }
    let n = T::from_f64(width as f64);
    let mut dx = Matrix::zeros(rows, width);
    let mut dgain = Matrix::zeros(1, width);
    let mut dbias = Matrix::zeros(1, width);
    let mut dxhat = alloc::vec![T::zero(); width];
    for r in 0..rows {
        let xhat = cache.normalized.row(r);
        let g = dy.row(r);
        for c in 0..width {
            dgain.data_mut()[c] += g[c] * xhat[c];
            dbias.data_mut()[c] += g[c];
            dxhat[c] = g[c] * gain.data()[c];
        }
        let mean_d = dxhat.iter().copied().sum::<T>() / n;
        let mean_dx = dxhat.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
        let inv = cache.inv_std[r];
        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
            *out = inv * (dxhat[c] - mean_d - xhat[c] * mean_dx);
        }
    }
    Ok((dx, dgain, dbias))
}
