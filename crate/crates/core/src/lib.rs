//! Blind one-bit compressive sensing with a deep-unfolded BIHT network.
//!
//! The crate generates synthetic one-bit measurements, trains a surrogate
//! sensing matrix and per-layer step sizes with hand-written reverse-mode
//! gradients, and compares the trained decoder against classical BIHT run
//! with the true sensing matrix.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the double-precision types the training pipeline uses.

pub mod checkpoint;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod training;
pub mod sensing;
pub mod unfolded;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, DenseVector, Real, SeededRng};

pub type Matrix = DenseMatrix<f64>;
pub type Vector = DenseVector<f64>;
pub type MatrixF32 = DenseMatrix<f32>;
pub type VectorF32 = DenseVector<f32>;
pub type Params = unfolded::UnfoldedParams<f64>;
pub type Data = datagen::Dataset<f64>;
