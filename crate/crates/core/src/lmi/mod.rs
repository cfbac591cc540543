//! Affine symmetric-matrix constraints and a strict-feasibility solver.
//!
//! A problem is a list of maps `F_c(z)` that must satisfy `F_c(z) ≺ −δI`
//! and a list `G_c(z)` that must satisfy `G_c(z) ≻ δI`, over one shared
//! decision vector `z`. Matrix-valued unknowns are laid out in `z` with
//! [`VarSpace`].

mod barrier;
mod dense;
mod map;
mod pdip;
mod solver;
mod vars;

pub use map::AffineMatrixMap;
pub use barrier::StopRule;
pub use solver::{solve_feasibility, solve_with, Algorithm, SolverOptions};
pub use vars::{RectVar, SymVar, VarSpace};

use thiserror::Error;

use crate::linalg::LinalgError;

pub const DEFAULT_MARGIN: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Slack allowed when re-checking the margins of a feasible point.
pub const MARGIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in problem data or decision vector")]
    NonFinite,
    #[error("margin must be positive, got {0}")]
    BadMargin(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub map: AffineMatrixMap,
}

/// Which side of the margin a constraint must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(z) ≺ −δI`
    Negative,
    /// `F(z) ≻ δI`
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub negative: Vec<Constraint>,
    pub positive: Vec<Constraint>,
    pub margin: f64,
    /// Starting point of the solver; zeros when empty.
    pub initial: Vec<f64>,
}

impl LmiProblem {
    pub fn new(num_vars: usize, margin: f64) -> Self {
        Self { num_vars, negative: Vec::new(), positive: Vec::new(), margin, initial: Vec::new() }
    }

    pub fn require_negative(&mut self, label: impl Into<String>, map: AffineMatrixMap) {
        self.negative.push(Constraint { label: label.into(), map });
    }

    pub fn require_positive(&mut self, label: impl Into<String>, map: AffineMatrixMap) {
        self.positive.push(Constraint { label: label.into(), map });
    }

    pub fn num_constraints(&self) -> usize {
        self.negative.len() + self.positive.len()
    }

    /// All constraints in solver order: negatives first, then positives.
    pub fn constraints(&self) -> impl Iterator<Item = (Sense, &Constraint)> {
        self.negative
            .iter()
            .map(|c| (Sense::Negative, c))
            .chain(self.positive.iter().map(|c| (Sense::Positive, c)))
    }

    pub fn validate(&self) -> Result<(), LmiError> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(LmiError::BadMargin(self.margin));
        }
        if !self.initial.is_empty() && self.initial.len() != self.num_vars {
            return Err(LmiError::DimensionMismatch(format!(
                "initial point has {} entries, problem has {} variables",
                self.initial.len(),
                self.num_vars
            )));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(LmiError::NonFinite);
        }
        for (_, c) in self.constraints() {
            if c.map.var_bound() > self.num_vars {
                return Err(LmiError::DimensionMismatch(format!(
                    "constraint `{}` uses variable {} of {}",
                    c.label,
                    c.map.var_bound() - 1,
                    self.num_vars
                )));
            }
            let finite = c.map.constant().is_finite() && c.map.terms().all(|(_, m)| m.is_finite());
            if !finite {
                return Err(LmiError::NonFinite);
            }
        }
        Ok(())
    }

    /// Extreme eigenvalue of every constraint at `z`: the largest for
    /// negative constraints, the smallest for positive ones. Computed from
    /// scratch with the symmetric eigensolver.
    pub fn margins_at(&self, z: &[f64]) -> Result<Vec<f64>, LmiError> {
        self.constraints()
            .map(|(sense, c)| {
                let e = crate::linalg::sym_eig(&c.map.evaluate(z)?)?;
                Ok(match sense {
                    Sense::Negative => e.max(),
                    Sense::Positive => e.min(),
                })
            })
            .collect()
    }

    /// Whether `margins` (from [`margins_at`](Self::margins_at)) meet δ
    /// up to `slack`.
    pub fn margins_satisfied(&self, margins: &[f64], slack: f64) -> bool {
        let d = self.margin;
        self.constraints().zip(margins).all(|((sense, _), &m)| match sense {
            Sense::Negative => m <= -d + slack,
            Sense::Positive => m >= d - slack,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    pub z: Vec<f64>,
    /// Same order as [`LmiProblem::constraints`].
    pub margins: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl LmiSolution {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }

    /// How far the worst constraint is from its required margin δ;
    /// nonpositive exactly when every margin holds.
    pub fn violation(&self, problem: &LmiProblem) -> f64 {
        let d = problem.margin;
        problem
            .constraints()
            .zip(&self.margins)
            .map(|((sense, _), &m)| match sense {
                Sense::Negative => m + d,
                Sense::Positive => d - m,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `[[E, Λ₁, …, Λ_k], [Λ₁ᵀ, −X₁, 0…], …, [Λ_kᵀ, 0…, −X_k]]`.
///
/// With every `X_j ≻ 0` this is negative definite exactly when
/// `E + Σ Λ_j X_j⁻¹ Λ_jᵀ ≺ 0`. The `Λ_j` here are square maps of the same
/// size as `E` and `X_j`.
pub fn schur_expand(
    e: &AffineMatrixMap,
    lambdas: &[AffineMatrixMap],
    xs: &[AffineMatrixMap],
) -> Result<AffineMatrixMap, LmiError> {
    if lambdas.len() != xs.len() {
        return Err(LmiError::DimensionMismatch(format!(
            "{} coupling blocks but {} diagonal blocks",
            lambdas.len(),
            xs.len()
        )));
    }
    let n = e.dim();
    let mut offsets = Vec::with_capacity(xs.len());
    let mut total = n;
    for (j, (l, x)) in lambdas.iter().zip(xs).enumerate() {
        if l.dim() != n || x.dim() != n {
            return Err(LmiError::DimensionMismatch(format!(
                "block {j}: coupling {} and diagonal {} must both match {n}",
                l.dim(),
                x.dim()
            )));
        }
        offsets.push(total);
        total += x.dim();
    }
    if lambdas.is_empty() {
        return Ok(e.clone());
    }
    let mut out = AffineMatrixMap::zero(total);
    e.embed_into(&mut out, 0, 0);
    for ((l, x), &off) in lambdas.iter().zip(xs).zip(&offsets) {
        l.embed_into(&mut out, 0, off);
        x.scaled(-1.0).embed_into(&mut out, off, off);
    }
    Ok(out)
}
