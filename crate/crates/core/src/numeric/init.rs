use num_traits::Float;
use rand::{Rng, RngCore};

use super::matrix::Matrix;
use crate::Real;

/// Glorot-uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`, i.e.
/// variance `2 / (fan_in + fan_out)`.
pub fn xavier_uniform<T: Real>(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Matrix<T> {
    let bound = Float::sqrt(6.0 / (rows + cols) as f64);
    Matrix::from_fn(rows, cols, |_, _| T::from_f64(bound * (2.0 * rng.gen::<f64>() - 1.0)))
}

pub fn xavier_variance(rows: usize, cols: usize) -> f64 {
    2.0 / (rows + cols) as f64
}
