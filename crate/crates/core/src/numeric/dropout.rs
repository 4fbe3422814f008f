use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::Real;

/// Inverted-dropout mask: each entry is 0 with probability `p`, otherwise
/// `1 / (1 - p)`.
pub fn dropout_mask<T: Real>(len: usize, p: f64, rng: &mut dyn RngCore) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - p));
    (0..len).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect()
}

pub fn apply_mask<T: Real>(values: &mut [T], mask: &[T]) {
    for (v, &m) in values.iter_mut().zip(mask) {
        *v *= m;
    }
}
