use serde::{Deserialize, Serialize};

use super::{DenseVector, Real};
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    entries: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    /// Builds a matrix from row-major entries, checking length and finiteness.
    pub fn new(rows: usize, cols: usize, entries: Vec<T>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix entries".into(),
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("matrix entry {pos}") });
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![T::zero(); rows * cols] }
    }

    pub fn identity(size: usize) -> Self {
        let mut out = Self::zeros(size, size);
        for i in 0..size {
            out.entries[i * size + i] = T::one();
        }
        out
    }

    pub fn from_diagonal(diagonal: &[T]) -> Self {
        let size = diagonal.len();
        let mut out = Self::zeros(size, size);
        for (i, &d) in diagonal.iter().enumerate() {
            out.entries[i * size + i] = d;
        }
        out
    }

    /// Builds a matrix from `f64` rows; panics on ragged input. Intended for literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix literal");
        let entries = rows.iter().flat_map(|r| r.iter().map(|&v| T::lit(v))).collect();
        Self { rows: rows.len(), cols, entries }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Self { rows, cols, entries }
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

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.entries[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<T> {
        self.entries
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    /// `self · x`. Zero entries of `x` are skipped, so sparse inputs cost
    /// `rows × nnz(x)`.
    pub fn mul_vec(&self, x: &DenseVector<T>) -> Result<DenseVector<T>> {
        check_len("matrix-vector product", self.cols, x.len())?;
        let support = x.support();
        let out = (0..self.rows)
            .map(|i| {
                let row = self.row(i);
                support.iter().fold(T::zero(), |acc, &j| acc + row[j] * x[j])
            })
            .collect();
        Ok(out)
    }

    /// `selfᵀ · r`, accumulated row by row and skipping zero entries of `r`.
    pub fn mul_transpose_vec(&self, r: &DenseVector<T>) -> Result<DenseVector<T>> {
        check_len("transposed matrix-vector product", self.rows, r.len())?;
        let mut out = DenseVector::zeros(self.cols);
        for (i, &ri) in r.iter().enumerate() {
            if ri.is_zero() {
                continue;
            }
            for (o, &a) in out.as_mut_slice().iter_mut().zip(self.row(i)) {
                *o += a * ri;
            }
        }
        Ok(out)
    }

    /// `self += factor · a bᵀ`, touching only the nonzero rows of `a` and
    /// nonzero columns of `b`.
    pub fn add_outer(&mut self, factor: T, a: &DenseVector<T>, b: &DenseVector<T>) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = b.support();
        if cols.is_empty() {
            return;
        }
        for (i, &ai) in a.iter().enumerate() {
            if ai.is_zero() {
                continue;
            }
            let scale = factor * ai;
            let row = &mut self.entries[i * self.cols..(i + 1) * self.cols];
            for &j in &cols {
                row[j] += scale * b[j];
            }
        }
    }

    /// `self += factor · other`.
    pub fn add_scaled(&mut self, factor: T, other: &Self) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_len("matrix product inner dimension", self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out.entries[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn distance_frobenius(&self, other: &Self) -> T {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tolerance: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tolerance))
    }
}

pub(crate) fn check_len(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context: context.into(), expected, found })
    }
}
