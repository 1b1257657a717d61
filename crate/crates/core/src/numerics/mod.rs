//! Dense linear algebra, seeded randomness, and the small selection and
//! factorization kernels the solvers are built from.

mod matrix;
mod ops;
mod rng;
mod scalar;
mod vector;

pub use matrix::DenseMatrix;
pub(crate) use matrix::check_len;
pub use ops::{cholesky_lower, l2_normalize, top_k_indices};
pub use rng::SeededRng;
pub use scalar::Real;
pub use vector::DenseVector;
