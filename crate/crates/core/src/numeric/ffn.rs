use super::matrix::{add_row_bias, column_sums, matmul, matmul_grad, Matrix};
use crate::error::{bail, Result};
use crate::Real;

/// Position-wise feed-forward network `max(0, x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams<T> {
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

#[derive(Debug, Clone)]
pub struct FfnCache<T> {
    pub input: Matrix<T>,
    pub pre: Matrix<T>,
    pub hidden: Matrix<T>,
}

impl<T: Real> FfnParams<T> {
    pub fn zeros(d: usize, d_ff: usize) -> Self {
        Self {
            w1: Matrix::zeros(d, d_ff),
            b1: Matrix::zeros(1, d_ff),
            w2: Matrix::zeros(d_ff, d),
            b2: Matrix::zeros(1, d),
        }
    }

    fn check(&self) -> Result<()> {
        let (d, d_ff) = self.w1.shape();
        if self.b1.shape() != (1, d_ff) || self.w2.shape() != (d_ff, d) || self.b2.shape() != (1, d) {
            bail!(
                Shape,
                "inconsistent FFN widths w1 {:?} b1 {:?} w2 {:?} b2 {:?}",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.b2.shape()
            );
        }
        Ok(())
    }
}

pub fn ffn<T: Real>(x: &Matrix<T>, p: &FfnParams<T>) -> Result<(Matrix<T>, FfnCache<T>)> {
    p.check()?;
    let mut pre = matmul(x, &p.w1)?;
    add_row_bias(&mut pre, &p.b1)?;
    let mut hidden = pre.clone();
    hidden.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
    let mut y = matmul(&hidden, &p.w2)?;
    add_row_bias(&mut y, &p.b2)?;
    Ok((y, FfnCache { input: x.clone(), pre, hidden }))
}

/// Returns `(dx, parameter gradients)`.
pub fn ffn_backward<T: Real>(
    cache: &FfnCache<T>,
    p: &FfnParams<T>,
    dy: &Matrix<T>,
) -> Result<(Matrix<T>, FfnParams<T>)> {
    let (dhidden, dw2) = matmul_grad(&cache.hidden, &p.w2, dy)?;
    let db2 = column_sums(dy);
    let mut dpre = dhidden;
    for (g, &z) in dpre.data_mut().iter_mut().zip(cache.pre.data()) {
        if z <= T::zero() {
            *g = T::zero();
        }
    }
    let (dx, dw1) = matmul_grad(&cache.input, &p.w1, &dpre)?;
    let db1 = column_sums(&dpre);
    Ok((dx, FfnParams { w1: dw1, b1: db1, w2: dw2, b2: db2 }))
}
