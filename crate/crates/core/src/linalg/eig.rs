use super::{LinalgError, Matrix};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix, `m = V diag(w) Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the unit eigenvector for `eigenvalues[k]`.
    pub eigenvectors: Matrix,
}

impl SymEig {
    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::INFINITY)
    }

    /// `V diag(f(w)) Vᵀ`, exactly symmetric.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        let w: Vec<f64> = self.eigenvalues.iter().map(|&x| f(x)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| v[(i, k)] * w[k] * v[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn sym_eig(m: &Matrix) -> Result<SymEig, LinalgError> {
    m.require_symmetric()?;
    Ok(jacobi(m.symmetrize()))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &Matrix) -> Result<f64, LinalgError> {
    sym_eig(m).map(|e| e.max())
}

fn jacobi(mut a: Matrix) -> SymEig {
    let n = a.rows();
    let mut v = Matrix::identity(n);
    let scale = a.frobenius_norm();
    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
                .map(|(p, q)| a[(p, q)] * a[(p, q)])
                .sum();
            if off.sqrt() <= f64::EPSILON * 1e-3 * scale {
                break;
            }
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let (app, aqq) = (a[(p, p)], a[(q, q)]);
                    // skip rotations that cannot change the diagonal in floating point
                    if apq.abs() < f64::EPSILON * 1e-2 * (app.abs() + aqq.abs()).max(f64::MIN_POSITIVE) {
                        a[(p, q)] = 0.0;
                        a[(q, p)] = 0.0;
                        continue;
                    }
                    rotated = true;
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    rotate(&mut a, &mut v, p, q, c, s, t, apq);
                }
            }
            if !rotated {
                break;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[(i, k)] = v[(i, src)];
        }
    }
    SymEig { eigenvalues, eigenvectors }
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = a.rows();
    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_has_unit_spectrum() {
        let e = sym_eig(&Matrix::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_is_sorted_with_axis_vectors() {
        let e = sym_eig(&Matrix::diag(&[5.0, -2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![-2.0, 5.0]);
        assert_abs_diff_eq!(e.eigenvectors[(1, 0)].abs(), 1.0);
        assert_abs_diff_eq!(e.eigenvectors[(0, 1)].abs(), 1.0);
    }

    #[test]
    fn two_by_two_from_characteristic_polynomial() {
        // trace 1.8, det 0.8 -> roots of t^2 - 1.8 t + 0.8
        let m = Matrix::from_rows(&[[0.9, 0.1], [0.1, 0.9]]).unwrap();
        let e = sym_eig(&m).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(e.eigenvalues[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_nan() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&m), Err(LinalgError::NonSymmetric { .. })));
        let m = Matrix::from_rows(&[[1.0, f64::NAN], [f64::NAN, 1.0]]).unwrap();
        assert_eq!(sym_eig(&m), Err(LinalgError::NonFinite));
        assert!(matches!(sym_eig(&Matrix::zeros(2, 3)), Err(LinalgError::NonSquare { .. })));
    }

    #[test]
    fn zero_matrix() {
        let e = sym_eig(&Matrix::zeros(4, 4)).unwrap();
        assert!(e.eigenvalues.iter().all(|&w| w == 0.0));
    }
}
