//! Small dense real linear algebra.
//!
//! Everything here works on [`Matrix`], a row-major `f64` matrix sized for
//! control problems (a few dozen rows at most). The decompositions are the
//! classical Jacobi family: cyclic Jacobi for symmetric eigenproblems and
//! one-sided (Hestenes) Jacobi for the SVD.

mod eig;
mod matrix;
mod solve;
mod svd;

pub use eig::{max_eigenvalue, sym_eig, SymEig};
pub use matrix::Matrix;
pub use solve::{cholesky, inverse, pinv, solve_least_squares, Cholesky, DEFAULT_PINV_TOL};
pub use svd::{svd, Svd};

use thiserror::Error;

/// Absolute tolerance used to decide whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} > {tol:e})")]
    NonSymmetric { asymmetry: f64, tol: f64 },
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
}

/// `g1 ⊗ I + I ⊗ g2`.
///
/// For two generator matrices this is the generator of the pair of chains
/// jumping independently, with the joint state `(i1, i2)` stored at index
/// `i1 * n2 + i2`.
pub fn kron_sum(g1: &Matrix, g2: &Matrix) -> Result<Matrix, LinalgError> {
    g1.require_square()?;
    g2.require_square()?;
    let i1 = Matrix::identity(g1.rows());
    let i2 = Matrix::identity(g2.rows());
    Ok(&g1.kron(&i2) + &i1.kron(g2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_sum_of_zeros() {
        let k = kron_sum(&Matrix::zeros(2, 2), &Matrix::zeros(3, 3)).unwrap();
        assert_eq!(k, Matrix::zeros(6, 6));
    }

    #[test]
    fn kron_sum_with_single_state_chain() {
        let g1 = Matrix::from_rows(&[[-1.0, 1.0], [1.0, -1.0]]).unwrap();
        let k = kron_sum(&g1, &Matrix::zeros(1, 1)).unwrap();
        assert_eq!(k, g1);
    }

    #[test]
    fn kron_sum_rejects_rectangular() {
        assert!(matches!(
            kron_sum(&Matrix::zeros(2, 3), &Matrix::zeros(1, 1)),
            Err(LinalgError::NonSquare { .. })
        ));
    }
}
