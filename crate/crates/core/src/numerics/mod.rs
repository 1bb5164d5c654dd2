//! Dense linear algebra, descriptive statistics and deterministic sampling.
//!
//! Everything here works on `f64`. Vectors are plain slices / `Vec<f64>`;
//! [`Matrix`] is a row-major dense matrix with fixed shape.

mod linalg;
mod rng;
mod stats;

pub use linalg::{pinv, ridge_solve, sym_eig, Matrix, SymEig};
pub use rng::Rng;
pub use stats::{covariance, gaussian, mean, rows_mean, rows_total_variance, total_variance};

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Squared Euclidean distance.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean distance.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}
