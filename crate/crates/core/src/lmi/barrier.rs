//! Log-barrier interior-point method for the epigraph problem
//!
//! ```text
//! minimise t  subject to  H_c(z) ≺ t·I  for every constraint c,
//! ```
//!
//! where every constraint has first been written as `H_c(z) ≺ −δI`.
//! Newton's method follows the central path of
//! `K·t − Σ_c log det(tI − H_c(z))` for increasing `K`. The inverse
//! slacks `(tI − H_c)⁻¹` are scaled into a dual point at every iterate,
//! and its weak-duality bound on the optimum gives the infeasibility
//! test once it exceeds `−δ`.
//!
//! The search is confined to the ball `‖z‖ < R` by one more barrier term
//! `−log(R² − ‖z‖²)`. Homogeneous constraint sets (the usual case for
//! Lyapunov inequalities) are cones, and without the ball the barrier
//! runs off to infinity along nearly-feasible rays. An infeasible verdict
//! therefore means "infeasible within radius R".

use super::{AffineMatrixMap, LmiError, SolveStatus};
use super::dense::{inverse_factor, ScaledSpd};
use crate::linalg::{cholesky, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Return the first iterate at which every margin holds.
    FirstFeasible,
    /// Keep following the central path until `t` has converged.
    Converge,
}

pub(crate) struct Outcome {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// `L⁻¹` and `log det` for `tI − H`, or None when that matrix is not
/// positive definite.
fn slack_factor(map: &AffineMatrixMap, z: &[f64], t: f64) -> Option<(Matrix, f64)> {
    let mut s = map.evaluate_unchecked(z).scale(-1.0);
    for i in 0..s.rows() {
        s[(i, i)] += t;
    }
    inverse_factor(&s)
}

fn ball_slack(z: &[f64], radius: f64) -> Option<f64> {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let slack = radius * radius - r2;
    (slack > 0.0).then_some(slack)
}

fn objective(maps: &[AffineMatrixMap], z: &[f64], t: f64, k: f64, radius: f64) -> Option<f64> {
    let mut f = k * t - ball_slack(z, radius)?.ln();
    for map in maps {
        let (_, logdet) = slack_factor(map, z, t)?;
        f -= logdet;
    }
    Some(f)
}

fn holds(maps: &[AffineMatrixMap], z: &[f64], delta: f64) -> bool {
    maps.iter().all(|map| {
        let mut s = map.evaluate_unchecked(z).scale(-1.0);
        for i in 0..s.rows() {
            s[(i, i)] -= delta;
        }
        cholesky(&s).is_ok()
    })
}

/// Gradient and Hessian of the barrier at `(z, t)`; the last coordinate
/// is `t`, whose coefficient in `H_c − tI` is `−I`.
///
/// The ball term contributes `2I/q + u uᵀ` with `u = 2z/q`. The rank-one
/// part is returned separately because it dominates as `q → 0` and wrecks
/// the conditioning of the assembled matrix.
fn derivatives(maps: &[AffineMatrixMap], z: &[f64], t: f64, radius: f64) -> Option<(Vec<f64>, Matrix, Vec<f64>)> {
    let n = z.len();
    let mut g = vec![0.0; n + 1];
    let mut hess = Matrix::zeros(n + 1, n + 1);
    let q = ball_slack(z, radius)?;
    let mut u = vec![0.0; n + 1];
    for a in 0..n {
        g[a] += 2.0 * z[a] / q;
        hess[(a, a)] += 2.0 / q;
        u[a] = 2.0 * z[a] / q;
    }
    for map in maps {
        let (li, _) = slack_factor(map, z, t)?;
        let lit = li.transpose();
        let mut idx: Vec<usize> = Vec::with_capacity(map.num_terms() + 1);
        let mut us: Vec<Matrix> = Vec::with_capacity(map.num_terms() + 1);
        for (k, fk) in map.terms() {
            idx.push(k);
            us.push(&(&li * fk) * &lit);
        }
        idx.push(n);
        us.push((&li * &lit).scale(-1.0));
        for (a, ua) in us.iter().enumerate() {
            g[idx[a]] += ua.trace();
            for b in a..us.len() {
                let v = ua.dot(&us[b]);
                hess[(idx[a], idx[b])] += v;
                if a != b {
                    hess[(idx[b], idx[a])] += v;
                }
            }
        }
    }
    Some((g, hess, u))
}

/// Solves `(H + u uᵀ) x = rhs` by Sherman–Morrison.
fn newton_direction(hess: &Matrix, u: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let spd = ScaledSpd::new(hess)?;
    let x = spd.solve(rhs)?;
    let w = spd.solve(u)?;
    let ux: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
    let uw: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    let c = ux / (1.0 + uw);
    let out: Vec<f64> = x.iter().zip(&w).map(|(xi, wi)| xi - c * wi).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Weak-duality lower bound on `min t` over the ball, from the dual
/// point `Z_c ∝ (tI − H_c(z))⁻¹` scaled to unit total trace:
/// `Σ_c ⟨Z_c, C_c⟩ − R·‖(Σ_c ⟨Z_c, F_{c,k}⟩)_k‖`. Valid at any interior
/// point, centred or not.
fn dual_bound(maps: &[AffineMatrixMap], z: &[f64], t: f64, radius: f64) -> Option<f64> {
    let mut total = 0.0;
    let mut cval = 0.0;
    let mut a = vec![0.0; z.len()];
    for map in maps {
        let (li, _) = slack_factor(map, z, t)?;
        let w = &li.transpose() * &li;
        total += w.trace();
        cval += w.dot(map.constant());
        for (k, fk) in map.terms() {
            a[k] += w.dot(fk);
        }
    }
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    Some((cval - radius * norm) / total)
}

/// Weight `K` for which `(z, t)` is closest to centred, measured in the
/// Hessian norm: the least-squares solution of `∇φ + K·e_t ≈ 0`.
fn initial_weight(maps: &[AffineMatrixMap], z: &[f64], t: f64, radius: f64) -> Option<f64> {
    let n = z.len();
    let (g, hess, u) = derivatives(maps, z, t, radius)?;
    let mut et = vec![0.0; n + 1];
    et[n] = 1.0;
    let v = newton_direction(&hess, &u, &et)?;
    let w = newton_direction(&hess, &u, &g)?;
    let k = -w[n] / v[n];
    (k.is_finite() && k > 0.0).then_some(k.max(1e-8))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn solve(
    maps: &[AffineMatrixMap],
    n: usize,
    z0: Vec<f64>,
    delta: f64,
    max_iter: usize,
    stop: StopRule,
    radius: f64,
    accept: impl Fn(&[f64]) -> Result<bool, LmiError>,
) -> Result<Outcome, LmiError> {
    let dim_total: usize = maps.iter().map(|m| m.dim()).sum::<usize>() + 1;
    if maps.is_empty() {
        return Ok(Outcome { z: z0, iterations: 0, status: SolveStatus::Feasible });
    }
    if ball_slack(&z0, radius).is_none() {
        return Err(LmiError::DimensionMismatch(format!("starting point lies outside the search radius {radius:e}")));
    }
    let mut z = z0;
    let mut t0 = f64::NEG_INFINITY;
    for map in maps {
        t0 = t0.max(crate::linalg::max_eigenvalue(&map.evaluate_unchecked(&z))?);
    }
    let mut t = t0 + 1.0 + 0.1 * t0.abs();
    let mut k = initial_weight(maps, &z, t, radius).unwrap_or(1.0 / (1.0 + t0.abs()));
    let m = dim_total as f64;
    let mut iterations = 0;
    let mut feasible: Option<Vec<f64>> = None;

    'outer: loop {
        for _ in 0..200 {
            if (stop == StopRule::Converge || feasible.is_none()) && holds(maps, &z, delta) && accept(&z)? {
                if stop == StopRule::FirstFeasible {
                    return Ok(Outcome { z, iterations, status: SolveStatus::Feasible });
                }
                feasible = Some(z.clone());
            }
            if feasible.is_none() && dual_bound(maps, &z, t, radius).is_some_and(|lb| lb > -delta) {
                return Ok(Outcome { z, iterations, status: SolveStatus::Infeasible });
            }
            if iterations >= max_iter {
                break 'outer;
            }
            let Some((mut g, hess, u)) = derivatives(maps, &z, t, radius) else { break 'outer };
            g[n] += k;
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let Some(dir) = newton_direction(&hess, &u, &rhs) else { break 'outer };
            let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            iterations += 1;
            if -slope / 2.0 <= 1e-8 {
                break;
            }
            let f0 = objective(maps, &z, t, k, radius).expect("current point is interior");
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let zt: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
                let tt = t + step * dir[n];
                if let Some(f1) = objective(maps, &zt, tt, k, radius) {
                    if f1 <= f0 + 0.25 * step * slope {
                        z = zt;
                        t = tt;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let gap = m / k;
        if feasible.is_some() {
            if gap <= 1e-9 * t.abs().max(1.0) {
                break;
            }
        } else if gap <= 1e-12 * t.abs().max(1.0) {
            break;
        }
        k *= 10.0;
    }
    if holds(maps, &z, delta) && accept(&z)? {
        feasible = Some(z.clone());
    }
    Ok(match feasible {
        Some(z) => Outcome { z, iterations, status: SolveStatus::Feasible },
        None => Outcome { z, iterations, status: SolveStatus::IterationLimit },
    })
}
