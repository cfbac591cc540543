use super::{svd, LinalgError, Matrix};

/// Relative singular-value cutoff used when no tolerance is supplied.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `m = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

pub fn cholesky(m: &Matrix) -> Result<Cholesky, LinalgError> {
    m.require_symmetric()?;
    let n = m.rows();
    // row-major storage, so row prefixes of L are contiguous
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &mut l[j * n..(j + 1) * n];
        let d = m[(j, j)] - row_j[..j].iter().map(|v| v * v).sum::<f64>();
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let d = d.sqrt();
        row_j[j] = d;
        let (upper, lower) = l.split_at_mut((j + 1) * n);
        let prefix = &upper[j * n..j * n + j];
        for i in j + 1..n {
            let row_i = &mut lower[(i - j - 1) * n..(i - j) * n];
            let s = m[(i, j)] - row_i[..j].iter().zip(prefix).map(|(a, b)| a * b).sum::<f64>();
            row_i[j] = s / d;
        }
    }
    Ok(Cholesky { l: Matrix::new(n, n, l)? })
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    /// Solves `m x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let n = l.rows();
        assert_eq!(b.len(), n, "cholesky solve dimension mismatch");
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[(k, i)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(m: &Matrix) -> Result<Matrix, LinalgError> {
    m.require_square()?;
    m.require_finite()?;
    let n = m.rows();
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);
    let scale = m.max_abs();
    if scale == 0.0 {
        return Err(LinalgError::Singular);
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if a[(pivot, col)].abs() <= f64::EPSILON * scale {
            return Err(LinalgError::Singular);
        }
        if pivot != col {
            for j in 0..n {
                a.as_mut_slice().swap(pivot * n + j, col * n + j);
                inv.as_mut_slice().swap(pivot * n + j, col * n + j);
            }
        }
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(i, j)] -= f * a[(col, j)];
                inv[(i, j)] -= f * inv[(col, j)];
            }
        }
    }
    Ok(inv)
}

/// Moore-Penrose pseudo-inverse. Singular values at or below
/// `tol * σ_max` are treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Result<Matrix, LinalgError> {
    let s = svd(m)?;
    let cutoff = tol.max(0.0) * s.singular_values.first().copied().unwrap_or(0.0);
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(cols, rows);
    for (k, &sigma) in s.singular_values.iter().enumerate() {
        if sigma <= cutoff || sigma == 0.0 {
            continue;
        }
        for i in 0..cols {
            let vik = s.v[(i, k)] / sigma;
            if vik == 0.0 {
                continue;
            }
            for j in 0..rows {
                out[(i, j)] += vik * s.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Minimises `‖a x − b‖_F` column by column.
///
/// Uses Householder QR when `a` has full column rank and falls back to the
/// pseudo-inverse otherwise.
pub fn solve_least_squares(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    a.require_finite()?;
    b.require_finite()?;
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "least squares with {} equations but {} right-hand rows",
            a.rows(),
            b.rows()
        )));
    }
    if a.rows() >= a.cols() {
        if let Some(x) = householder_solve(a, b) {
            return Ok(x);
        }
    }
    Ok(&pinv(a, DEFAULT_PINV_TOL)? * b)
}

fn householder_solve(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut qtb = b.clone();
    let k = b.cols();
    for j in 0..n {
        let norm: f64 = (j..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if r[(j, j)] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| r[(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..n {
                let s: f64 = (j..m).map(|i| v[i - j] * r[(i, c)]).sum::<f64>() * 2.0 / vnorm2;
                for i in j..m {
                    r[(i, c)] -= s * v[i - j];
                }
            }
            for c in 0..k {
                let s: f64 = (j..m).map(|i| v[i - j] * qtb[(i, c)]).sum::<f64>() * 2.0 / vnorm2;
                for i in j..m {
                    qtb[(i, c)] -= s * v[i - j];
                }
            }
        }
    }
    let diag_max = (0..n).map(|j| r[(j, j)].abs()).fold(0.0_f64, f64::max);
    if (0..n).any(|j| r[(j, j)].abs() <= 1e-12 * diag_max) {
        return None;
    }
    let mut x = Matrix::zeros(n, k);
    for c in 0..k {
        for i in (0..n).rev() {
            let mut s = qtb[(i, c)];
            for t in i + 1..n {
                s -= r[(i, t)] * x[(t, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).max_abs() <= tol
    }

    #[test]
    fn pinv_of_identity() {
        let i = Matrix::identity(2);
        assert!(close(&pinv(&i, DEFAULT_PINV_TOL).unwrap(), &i, 1e-15));
    }

    #[test]
    fn pinv_rank_one() {
        let m = Matrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]).unwrap();
        assert!(close(&pinv(&m, DEFAULT_PINV_TOL).unwrap(), &m, 1e-14));
    }

    #[test]
    fn pinv_matches_analytic_inverse() {
        let m = Matrix::from_rows(&[[0.9, 0.1], [0.1, 0.9]]).unwrap();
        let expected = Matrix::from_rows(&[[1.125, -0.125], [-0.125, 1.125]]).unwrap();
        assert!(close(&pinv(&m, DEFAULT_PINV_TOL).unwrap(), &expected, 1e-14));
        assert!(close(&inverse(&m).unwrap(), &expected, 1e-14));
    }

    #[test]
    fn pinv_rejects_nan() {
        let m = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        assert_eq!(pinv(&m, 0.0).unwrap_err(), LinalgError::NonFinite);
    }

    #[test]
    fn inverse_detects_singular() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
        assert_eq!(inverse(&m), Err(LinalgError::Singular));
    }

    #[test]
    fn least_squares_examples() {
        let b = Matrix::from_rows(&[[1.5, -2.0], [0.25, 7.0]]).unwrap();
        assert!(close(&solve_least_squares(&Matrix::identity(2), &b).unwrap(), &b, 1e-15));

        let a = Matrix::column(&[1.0, 1.0]);
        let x = solve_least_squares(&a, &Matrix::column(&[0.0, 2.0])).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0, epsilon = 1e-15);

        let a = Matrix::diag(&[2.0, 3.0]);
        let x = solve_least_squares(&a, &Matrix::column(&[4.0, 9.0])).unwrap();
        assert!(close(&x, &Matrix::column(&[2.0, 3.0]), 1e-15));
    }

    #[test]
    fn least_squares_rank_deficient_uses_pinv() {
        let a = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]]).unwrap();
        let b = Matrix::column(&[2.0, 0.0, 1.0]);
        let x = solve_least_squares(&a, &b).unwrap();
        // minimum-norm solution of x1 + x2 = 1
        assert!(close(&x, &Matrix::column(&[0.5, 0.5]), 1e-13));
    }

    #[test]
    fn cholesky_solves() {
        let m = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let c = cholesky(&m).unwrap();
        let mut b = vec![2.0, 1.0];
        c.solve_in_place(&mut b);
        let back = m.mul_vec(&b);
        assert_abs_diff_eq!(back[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(back[1], 1.0, epsilon = 1e-14);
        let indefinite = Matrix::diag(&[1.0, -1.0]);
        assert!(matches!(cholesky(&indefinite), Err(LinalgError::NotPositiveDefinite)));
    }
}
