use super::matrix::Matrix;
use crate::error::{bail, Result};
use crate::Real;

/// Summed negative log-likelihood over unmasked rows together with the
/// gradient of that sum.
#[derive(Debug, Clone)]
pub struct CrossEntropySum<T> {
    pub loss_sum: T,
    pub count: usize,
    pub dlogits: Matrix<T>,
}

/// Rows with `mask[r] == false` contribute neither loss nor gradient.
pub fn cross_entropy_sum<T: Real>(logits: &Matrix<T>, targets: &[usize], mask: &[bool]) -> Result<CrossEntropySum<T>> {
    let (rows, vocab) = logits.shape();
    if targets.len() != rows || mask.len() != rows {
        bail!(Shape, "{} targets / {} mask entries for {rows} rows", targets.len(), mask.len());
    }
    let mut dlogits = Matrix::zeros(rows, vocab);
    let mut loss_sum = T::zero();
    let mut count = 0;
    for r in 0..rows {
        if !mask[r] {
            continue;
        }
        let t = targets[r];
        if t >= vocab {
            bail!(InvalidInput, "target {t} outside {vocab} classes");
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
        let lse = max + sum.ln();
        loss_sum += lse - row[t];
        count += 1;
        let g = dlogits.row_mut(r);
        for (o, &x) in g.iter_mut().zip(row) {
            *o = (x - lse).exp();
        }
        g[t] -= T::one();
    }
    Ok(CrossEntropySum { loss_sum, count, dlogits })
}

/// Mean negative log-likelihood (nats) over unmasked rows and its gradient.
pub fn cross_entropy<T: Real>(logits: &Matrix<T>, targets: &[usize], mask: &[bool]) -> Result<(T, Matrix<T>)> {
    let CrossEntropySum { loss_sum, count, mut dlogits } = cross_entropy_sum(logits, targets, mask)?;
    if count == 0 {
        bail!(InvalidInput, "every position is masked");
    }
    let inv = T::one() / T::from_f64(count as f64);
    dlogits.scale(inv);
    Ok((loss_sum * inv, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff;
    use crate::numeric::testing::{random_matrix, rel_error};
    use alloc::vec;

    #[test]
    fn uniform_logits() {
        let (loss, _) = cross_entropy(&Matrix::<f64>::zeros(3, 4), &[0, 1, 3], &[true; 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction() {
        let logits = Matrix::from_vec(1, 3, vec![0.0f64, 200.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&logits, &[1], &[true]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn masking() {
        let logits = random_matrix::<f64>(3, 5, 1);
        assert!(cross_entropy(&logits, &[0, 1, 2], &[false; 3]).is_err());
        let (a, _) = cross_entropy(&logits, &[0, 1, 2], &[true, false, false]).unwrap();
        let (b, _) = cross_entropy(&Matrix::from_vec(1, 5, logits.row(0).to_vec()).unwrap(), &[0], &[true]).unwrap();
        assert_eq!(a, b);
        assert!(cross_entropy(&logits, &[0, 9, 2], &[true; 3]).is_err());
    }

    #[test]
    fn gradient_check() {
        let logits = random_matrix::<f64>(4, 6, 40);
        let targets = [2, 0, 5, 1];
        let mask = [true, false, true, true];
        let (_, analytic) = cross_entropy(&logits, &targets, &mask).unwrap();
        let numeric = finite_diff(
            |v| cross_entropy(&Matrix::from_vec(4, 6, v.to_vec()).unwrap(), &targets, &mask).unwrap().0,
            logits.data(),
            1e-6,
        );
        assert!(rel_error(analytic.data(), &numeric) < 1e-6);
    }
}
