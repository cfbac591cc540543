//! Small dense helpers shared by the interior-point solvers.

use crate::linalg::{cholesky, Cholesky, Matrix};

/// `L⁻¹` for the Cholesky factor `L` of `m`, with `log det m`; None when
/// `m` is not positive definite.
pub(crate) fn inverse_factor(m: &Matrix) -> Option<(Matrix, f64)> {
    let ch = cholesky(m).ok()?;
    let l = ch.factor();
    let d = l.rows();
    let mut logdet = 0.0;
    for i in 0..d {
        logdet += 2.0 * l[(i, i)].ln();
    }
    let mut li = Matrix::zeros(d, d);
    for j in 0..d {
        for i in j..d {
            let mut v = if i == j { 1.0 } else { 0.0 };
            for k in j..i {
                v -= l[(i, k)] * li[(k, j)];
            }
            li[(i, j)] = v / l[(i, i)];
        }
    }
    Some((li, logdet))
}

/// Cholesky factorisation of a symmetric positive (semi)definite system
/// after symmetric diagonal scaling, with a growing ridge as fallback.
pub(crate) struct ScaledSpd {
    d: Vec<f64>,
    ch: Cholesky,
}

impl ScaledSpd {
    pub fn new(m: &Matrix) -> Option<Self> {
        let n = m.rows();
        let d: Vec<f64> = (0..n).map(|i| if m[(i, i)] > 0.0 { 1.0 / m[(i, i)].sqrt() } else { 1.0 }).collect();
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = d[i] * m[(i, j)] * d[j];
            }
            if h[(i, i)] == 0.0 {
                h[(i, i)] = 1.0;
            }
        }
        let mut ridge = 0.0;
        for _ in 0..12 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += ridge;
            }
            if let Ok(ch) = cholesky(&hr.symmetrize()) {
                return Some(Self { d, ch });
            }
            ridge = if ridge == 0.0 { 1e-14 } else { ridge * 10.0 };
        }
        None
    }

    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let mut x: Vec<f64> = rhs.iter().zip(&self.d).map(|(r, di)| r * di).collect();
        self.ch.solve_in_place(&mut x);
        let out: Vec<f64> = x.iter().zip(&self.d).map(|(v, di)| v * di).collect();
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

/// Largest `α ≤ cap` keeping `M + α·Δ` positive definite, given `L⁻¹`
/// for the Cholesky factor of `M`.
pub(crate) fn max_step(li: &Matrix, delta: &Matrix, cap: f64) -> f64 {
    let w = (&(li * delta) * &li.transpose()).symmetrize();
    let lmin = min_eigenvalue(&w);
    if lmin < 0.0 {
        (-1.0 / lmin).min(cap)
    } else {
        cap
    }
}

/// Smallest eigenvalue of a symmetric matrix: Householder reduction to
/// tridiagonal form, then Sturm-sequence bisection.
pub(crate) fn min_eigenvalue(m: &Matrix) -> f64 {
    let n = m.rows();
    if n == 0 {
        return f64::INFINITY;
    }
    let mut a = m.as_slice().to_vec();
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let alpha_sq: f64 = (k + 1..n).map(|i| a[i * n + k] * a[i * n + k]).sum();
        if alpha_sq == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1) * n + k] > 0.0 { -alpha_sq.sqrt() } else { alpha_sq.sqrt() };
        v[k] = 0.0;
        v[k + 1] = a[(k + 1) * n + k] - alpha;
        for i in k + 2..n {
            v[i] = a[i * n + k];
        }
        let vnorm_sq: f64 = v[k..].iter().map(|x| x * x).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        // A ← H A H with H = I − 2vvᵀ/‖v‖², touching only the trailing block
        for i in k..n {
            let row = &a[i * n + k..(i + 1) * n];
            p[i] = row.iter().zip(&v[k..]).map(|(x, y)| x * y).sum::<f64>() * 2.0 / vnorm_sq;
        }
        let kk: f64 = (k..n).map(|i| v[i] * p[i]).sum::<f64>() / vnorm_sq;
        for i in k..n {
            p[i] -= kk * v[i];
        }
        for i in k..n {
            let (vi, qi) = (v[i], p[i]);
            let row = &mut a[i * n + k..(i + 1) * n];
            for (j, x) in row.iter_mut().enumerate() {
                *x -= vi * p[k + j] + qi * v[k + j];
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let e: Vec<f64> = (0..n - 1).map(|i| 0.5 * (a[(i + 1) * n + i] + a[i * n + i + 1])).collect();
    // Gershgorin interval, then bisection on the count of eigenvalues below x
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let tiny = f64::EPSILON * (hi - lo).abs().max(f64::MIN_POSITIVE);
    let below = |x: f64| {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..n {
            let off = if i > 0 { e[i - 1] * e[i - 1] } else { 0.0 };
            q = d[i] - x - if i > 0 { off / q } else { 0.0 };
            if q == 0.0 {
                q = tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    while hi - lo > 4.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
