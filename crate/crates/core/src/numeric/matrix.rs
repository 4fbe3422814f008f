use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Like [`zeros`](Self::zeros) but reports allocation failure instead of
    /// aborting.
    pub fn try_zeros(rows: usize, cols: usize) -> Result<Self> {
        let len = rows.checked_mul(cols).ok_or_else(|| Error::OutOfMemory(alloc::format!("{rows}x{cols} matrix")))?;
        let mut data = Vec::new();
        data.try_reserve_exact(len).map_err(|_| Error::OutOfMemory(alloc::format!("{rows}x{cols} matrix")))?;
        data.resize(len, T::zero());
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            bail!(Shape, "{} values for a {rows}x{cols} matrix", data.len());
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            bail!(Shape, "adding {:?} to {:?}", other.shape(), self.shape());
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }
}

/// `C = A · B`. Each output row depends only on the matching row of `A`.
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        bail!(Shape, "matmul {:?} x {:?}", a.shape(), b.shape());
    }
    let mut c = Matrix::zeros(a.rows, b.cols);
    matmul_into(a, b, &mut c);
    Ok(c)
}

fn matmul_into<T: Real>(a: &Matrix<T>, b: &Matrix<T>, c: &mut Matrix<T>) {
    let n = b.cols;
    for i in 0..a.rows {
        let out = &mut c.data[i * n..(i + 1) * n];
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `C = Aᵀ · B`.
pub fn matmul_tn<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows != b.rows {
        bail!(Shape, "matmul_tn {:?}ᵀ x {:?}", a.shape(), b.shape());
    }
    let n = b.cols;
    let mut c = Matrix::zeros(a.cols, n);
    for i in 0..a.rows {
        let brow = b.row(i);
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let out = &mut c.data[p * n..(p + 1) * n];
            for (o, &bv) in out.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(c)
}

/// `C = A · Bᵀ`.
pub fn matmul_nt<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.cols {
        bail!(Shape, "matmul_nt {:?} x {:?}ᵀ", a.shape(), b.shape());
    }
    matmul(a, &b.transpose())
}

/// Gradients of `C = A · B`: `dA = dC · Bᵀ`, `dB = Aᵀ · dC`.
pub fn matmul_grad<T: Real>(a: &Matrix<T>, b: &Matrix<T>, dc: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    if dc.shape() != (a.rows, b.cols) || a.cols != b.rows {
        bail!(Shape, "matmul_grad {:?} x {:?} with upstream {:?}", a.shape(), b.shape(), dc.shape());
    }
    Ok((matmul_nt(dc, b)?, matmul_tn(a, dc)?))
}

/// Adds a `1 × cols` bias row to every row.
pub fn add_row_bias<T: Real>(x: &mut Matrix<T>, bias: &Matrix<T>) -> Result<()> {
    if bias.rows != 1 || bias.cols != x.cols {
        bail!(Shape, "bias {:?} for rows of width {}", bias.shape(), x.cols);
    }
    for r in 0..x.rows {
        for (v, &b) in x.row_mut(r).iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    Ok(())
}

/// Column sums as a `1 × cols` matrix (gradient of a broadcast bias).
pub fn column_sums<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(1, x.cols);
    for r in 0..x.rows {
        for (o, &v) in out.data.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    out
}
