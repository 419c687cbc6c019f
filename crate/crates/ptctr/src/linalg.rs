//! Small dense symmetric-matrix helpers used by diagnostics and tests.
//!
//! These are thin wrappers over the LAPACK-backed kernels, kept public so
//! integration tests and the conditioning diagnostic can share one
//! implementation of "eigenvalues of a symmetric matrix" and "2-norm of a
//! symmetric matrix".

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use thiserror::Error;

/// Errors from the dense helpers.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// The input matrix is not square.
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    /// The LAPACK eigensolver reported a failure.
    #[error("symmetric eigendecomposition failed: {0}")]
    EighFailure(String),
}

/// Eigenvalues of a symmetric matrix, ascending. Only the lower triangle is
/// referenced.
pub fn sym_eigenvalues(matrix: &Array2<f64>) -> Result<Array1<f64>, LinalgError> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    let (values, _) = matrix
        .eigh(UPLO::Lower)
        .map_err(|e| LinalgError::EighFailure(e.to_string()))?;
    Ok(values)
}

/// The spectral norm (largest absolute eigenvalue) of a symmetric matrix via
/// a full dense eigendecomposition. Exact but `O(n³)`; prefer
/// [`spectral_norm_sym_power`] for large matrices.
pub fn spectral_norm_sym(matrix: &Array2<f64>) -> Result<f64, LinalgError> {
    let values = sym_eigenvalues(matrix)?;
    Ok(values.iter().fold(0.0, |acc, v| acc.max(v.abs())))
}

/// Estimates the spectral norm of a symmetric matrix by power iteration.
///
/// Deterministic (fixed starting vector), converging to the dominant
/// absolute eigenvalue from below, so using the result in a denominator
/// yields conservative (stricter) bounds. Stops after `max_iters` or when
/// the Rayleigh quotient stabilizes to relative `tol`.
pub fn spectral_norm_sym_power(matrix: &Array2<f64>, max_iters: usize, tol: f64) -> f64 {
    let n = matrix.nrows();
    if n == 0 {
        return 0.0;
    }
    // A fixed, mildly irregular start avoids orthogonality to the dominant
    // eigenvector for the matrices seen here (BFGS updates of the identity).
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + 0.37 * ((i % 7) as f64) / 7.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut estimate = 0.0_f64;
    for _ in 0..max_iters {
        let w = matrix.dot(&v);
        let new_estimate = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if new_estimate == 0.0 {
            return 0.0;
        }
        let rel_change = (new_estimate - estimate).abs() / new_estimate;
        estimate = new_estimate;
        v = w / new_estimate;
        if rel_change <= tol {
            break;
        }
    }
    estimate
}
