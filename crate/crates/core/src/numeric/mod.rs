//! Dense kernels with analytic gradients.

mod adam;
mod dropout;
mod ffn;
mod finite_diff;
mod init;
mod loss;
mod matrix;
mod norm;
mod softmax;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dropout::{apply_mask, dropout_mask};
pub use ffn::{ffn, ffn_backward, FfnCache, FfnParams};
pub use finite_diff::{finite_diff, relative_error};
pub use init::{xavier_uniform, xavier_variance};
pub use loss::{cross_entropy, cross_entropy_sum, CrossEntropySum};
pub use matrix::{add_row_bias, column_sums, matmul, matmul_grad, matmul_nt, matmul_tn, Matrix};
pub use norm::{layer_norm, layer_norm_backward, LayerNormCache, LAYER_NORM_EPS};
pub use softmax::{segment_softmax, segment_softmax_backward, SegmentVector};
pub(crate) use softmax::{softmax_backward_into, softmax_segments_into};

#[cfg(test)]
pub(crate) mod testing {
    use super::Matrix;
    use crate::Real;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_vec(len: usize, seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| scale * (2.0 * rng.gen::<f64>() - 1.0)).collect()
    }

    pub fn random_matrix<T: Real>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
        let v = random_vec(rows * cols, seed, 1.0).into_iter().map(T::from_f64).collect();
        Matrix::from_vec(rows, cols, v).unwrap()
    }

    pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
        super::relative_error(a, b)
    }
}
