//! Solver front end and the alternating-projection method.
//!
//! Alternating projections move between the affine image `{F(z)}` of all
//! constraints and the product of shifted negative semidefinite cones.
//! Each sweep clips the eigenvalues of every `F_c(z)` at `−τ` (with
//! `τ = target_factor · δ`) and then moves `z` to the least-squares fit
//! of the clipped blocks, `argmin_z Σ_c ‖F_c(z) − S_c‖_F²`. The normal
//! matrix of that fit does not depend on `z`, so it is factored once.

use super::barrier::{self, StopRule};
use super::pdip;
use super::{AffineMatrixMap, LmiError, LmiProblem, LmiSolution, Sense, SolveStatus, DEFAULT_MAX_ITER};
use crate::linalg::{cholesky, pinv, sym_eig, Cholesky, Matrix, SymEig, DEFAULT_PINV_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Primal-dual path following with a box `|z_k| ≤ R`.
    InteriorPoint,
    /// Log-barrier path following with a ball `‖z‖ < R`.
    Barrier,
    AlternatingProjections,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    /// Interior-point methods only.
    pub stop: StopRule,
    /// Interior-point methods only: the search region has radius
    /// `R = radius_factor · max(1, ‖z₀‖)`, in the max norm for
    /// [`Algorithm::InteriorPoint`] and the Euclidean norm for
    /// [`Algorithm::Barrier`]. Infeasible verdicts hold within it.
    pub radius_factor: f64,
    pub max_iter: usize,
    /// Eigenvalues are clipped at `−target_factor · δ`; must exceed 1 so
    /// that the cone point has room beyond the margin.
    pub target_factor: f64,
    /// Infeasible is declared once the best violation has not improved by
    /// a relative `stall_tol` within this many sweeps.
    pub stall_window: usize,
    pub stall_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::InteriorPoint,
            stop: StopRule::FirstFeasible,
            radius_factor: 10.0,
            max_iter: DEFAULT_MAX_ITER,
            target_factor: 2.0,
            stall_window: 500,
            stall_tol: 1e-12,
        }
    }
}

/// [`solve_with`] using default options and the given iteration cap.
pub fn solve_feasibility(problem: &LmiProblem, max_iter: usize) -> Result<LmiSolution, LmiError> {
    solve_with(problem, &SolverOptions { max_iter, ..SolverOptions::default() })
}

enum Normal {
    Chol(Cholesky),
    Pinv(Matrix),
}

impl Normal {
    fn solve(&self, rhs: &mut [f64]) {
        match self {
            Normal::Chol(c) => c.solve_in_place(rhs),
            Normal::Pinv(p) => {
                let out = p.mul_vec(rhs);
                rhs.copy_from_slice(&out);
            }
        }
    }
}

fn normal_matrix(maps: &[AffineMatrixMap], n: usize) -> Result<Normal, LmiError> {
    let mut nm = Matrix::zeros(n, n);
    for map in maps {
        let terms: Vec<(usize, &Matrix)> = map.terms().collect();
        for (a, &(k, fk)) in terms.iter().enumerate() {
            for &(l, fl) in &terms[a..] {
                let v = fk.dot(fl);
                nm[(k, l)] += v;
                if k != l {
                    nm[(l, k)] += v;
                }
            }
        }
    }
    // variables that appear nowhere are pinned at zero
    for k in 0..n {
        if nm[(k, k)] == 0.0 {
            nm[(k, k)] = 1.0;
        }
    }
    match cholesky(&nm) {
        Ok(c) => Ok(Normal::Chol(c)),
        Err(_) => Ok(Normal::Pinv(pinv(&nm, DEFAULT_PINV_TOL)?)),
    }
}

struct Sweep {
    eigs: Vec<SymEig>,
    violation: f64,
}

fn sweep(maps: &[AffineMatrixMap], z: &[f64], delta: f64) -> Result<Sweep, LmiError> {
    let mut eigs = Vec::with_capacity(maps.len());
    let mut violation = f64::NEG_INFINITY;
    for map in maps {
        let e = sym_eig(&map.evaluate_unchecked(z))?;
        violation = violation.max(e.max() + delta);
        eigs.push(e);
    }
    Ok(Sweep { eigs, violation })
}

pub fn solve_with(problem: &LmiProblem, opts: &SolverOptions) -> Result<LmiSolution, LmiError> {
    problem.validate()?;
    let n = problem.num_vars;
    let delta = problem.margin;
    let tau = opts.target_factor.max(1.0) * delta;

    // every constraint as `H(z) ≺ −δI`
    let maps: Vec<AffineMatrixMap> = problem
        .constraints()
        .map(|(sense, c)| match sense {
            Sense::Negative => c.map.clone(),
            Sense::Positive => c.map.scaled(-1.0),
        })
        .collect();

    let z0 = if problem.initial.is_empty() { vec![0.0; n] } else { problem.initial.clone() };
    let accept = |z: &[f64]| Ok(problem.margins_satisfied(&problem.margins_at(z)?, 0.0));
    let out = match opts.algorithm {
        Algorithm::InteriorPoint => {
            let norm0 = z0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let radius = opts.radius_factor * norm0.max(1.0);
            Some(pdip::solve(&maps, n, z0.clone(), delta, opts.max_iter, opts.stop, radius, accept)?)
        }
        Algorithm::Barrier => {
            let norm0 = z0.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = opts.radius_factor * norm0.max(1.0);
            Some(barrier::solve(&maps, n, z0.clone(), delta, opts.max_iter, opts.stop, radius, accept)?)
        }
        Algorithm::AlternatingProjections => None,
    };
    if let Some(out) = out {
        let margins = problem.margins_at(&out.z)?;
        return Ok(LmiSolution { z: out.z, margins, iterations: out.iterations, status: out.status });
    }
    let mut z = z0;
    let normal = normal_matrix(&maps, n)?;

    let mut best_z = z.clone();
    let mut best = f64::INFINITY;
    let mut anchor = (f64::INFINITY, 0usize);
    let mut iterations = 0;
    let mut status = SolveStatus::IterationLimit;

    loop {
        let s = sweep(&maps, &z, delta)?;
        if !s.violation.is_finite() && !maps.is_empty() {
            return Err(LmiError::NonFinite);
        }
        if s.violation < best {
            best = s.violation;
            best_z.clone_from(&z);
        }
        if best <= 0.0 {
            status = SolveStatus::Feasible;
            break;
        }
        if !anchor.0.is_finite() || best < anchor.0 - opts.stall_tol * anchor.0.abs() {
            anchor = (best, iterations);
        } else if iterations - anchor.1 >= opts.stall_window {
            status = SolveStatus::Infeasible;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut rhs = vec![0.0; n];
        for (map, e) in maps.iter().zip(&s.eigs) {
            let target = e.reconstruct_with(|l| l.min(-tau));
            let resid = &target - map.constant();
            for (k, fk) in map.terms() {
                rhs[k] += fk.dot(&resid);
            }
        }
        normal.solve(&mut rhs);
        z = rhs;
        iterations += 1;
    }

    let margins = problem.margins_at(&best_z)?;
    Ok(LmiSolution { z: best_z, margins, iterations, status })
}
