use std::cmp::Ordering;

use super::{DenseMatrix, DenseVector, Real};
use crate::error::{Error, Result};

/// Indices of the `k` largest-magnitude entries, ranked by decreasing
/// magnitude. Equal magnitudes rank the lower index first.
pub fn top_k_indices<T: Real>(v: &DenseVector<T>, k: usize) -> Vec<usize> {
    let k = k.min(v.len());
    if k == 0 {
        return Vec::new();
    }
    let rank = |&a: &usize, &b: &usize| -> Ordering {
        v[b].abs()
            .partial_cmp(&v[a].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    };
    let mut indices: Vec<usize> = (0..v.len()).collect();
    if k < indices.len() {
        indices.select_nth_unstable_by(k - 1, rank);
        indices.truncate(k);
    }
    indices.sort_unstable_by(rank);
    indices
}

/// `v / ‖v‖₂`; the zero vector is returned unchanged.
pub fn l2_normalize<T: Real>(v: &DenseVector<T>) -> DenseVector<T> {
    let norm = v.norm();
    if norm > T::zero() {
        v.scaled(norm.recip())
    } else {
        v.clone()
    }
}

/// Lower-triangular `L` with `L Lᵀ = C` for a symmetric positive-definite `C`.
pub fn cholesky_lower<T: Real>(c: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if !c.is_square() {
        return Err(Error::DimensionMismatch {
            context: "cholesky input must be square".into(),
            expected: c.rows(),
            found: c.cols(),
        });
    }
    let scale = c.as_slice().iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    if !c.is_symmetric(T::lit(1e-12) * scale) {
        return Err(Error::NotSymmetric);
    }
    let size = c.rows();
    let mut l = DenseMatrix::zeros(size, size);
    for j in 0..size {
        let mut pivot = c.get(j, j);
        for p in 0..j {
            pivot -= l.get(j, p) * l.get(j, p);
        }
        if !(pivot > T::zero()) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: pivot.as_f64() });
        }
        let diag = pivot.sqrt();
        l.set(j, j, diag);
        for i in j + 1..size {
            let mut acc = c.get(i, j);
            for p in 0..j {
                acc -= l.get(i, p) * l.get(j, p);
            }
            l.set(i, j, acc / diag);
        }
    }
    Ok(l)
}
