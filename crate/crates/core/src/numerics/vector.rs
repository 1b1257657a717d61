use std::ops::{Deref, Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::Real;
use crate::error::{Error, Result};

/// Owned dense vector of real scalars.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector<T> {
    entries: Vec<T>,
}

impl<T: Real> DenseVector<T> {
    pub fn zeros(len: usize) -> Self {
        Self { entries: vec![T::zero(); len] }
    }

    pub fn filled(len: usize, value: T) -> Self {
        Self { entries: vec![value; len] }
    }

    /// Wraps a vector without checking; callers producing values from finite
    /// arithmetic use this on hot paths.
    pub fn from_vec(entries: Vec<T>) -> Self {
        Self { entries }
    }

    /// Wraps a vector, rejecting NaN and infinite entries.
    pub fn try_from_vec(entries: Vec<T>) -> Result<Self> {
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("vector entry {pos}") });
        }
        Ok(Self { entries })
    }

    pub fn from_f64_slice(values: &[f64]) -> Self {
        Self { entries: values.iter().map(|&v| T::lit(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
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

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.entries.iter().map(|v| v.as_f64()).collect()
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.entries.iter().zip(&other.entries).map(|(&a, &b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> T {
        self.entries.iter().map(|&v| v * v).sum()
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self { entries: self.entries.iter().map(|&v| v * factor).collect() }
    }

    /// `self += factor * other`.
    pub fn axpy(&mut self, factor: T, other: &Self) {
        debug_assert_eq!(self.len(), other.len());
        for (a, &b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self { entries: self.entries.iter().zip(&other.entries).map(|(&a, &b)| a - b).collect() }
    }

    pub fn squared_distance(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum()
    }

    /// Indices of nonzero entries in ascending order.
    pub fn support(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_zero())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.entries.iter().filter(|v| !v.is_zero()).count()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|v| v.is_finite())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.entries.iter()
    }
}

impl<T> Deref for DenseVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.entries
    }
}

impl<T> Index<usize> for DenseVector<T> {
    type Output = T;

    fn index(&self, index: usize) -> &T {
        &self.entries[index]
    }
}

impl<T> IndexMut<usize> for DenseVector<T> {
    fn index_mut(&mut self, index: usize) -> &mut T {
        &mut self.entries[index]
    }
}

impl<T> From<Vec<T>> for DenseVector<T> {
    fn from(entries: Vec<T>) -> Self {
        Self { entries }
    }
}

impl<T> FromIterator<T> for DenseVector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self { entries: iter.into_iter().collect() }
    }
}
