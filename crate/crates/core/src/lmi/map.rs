use std::collections::BTreeMap;

use super::vars::{RectVar, SymVar};
use super::LmiError;
use crate::linalg::Matrix;

/// `F(z) = F₀ + Σ z_k F_k` over symmetric blocks of one dimension.
///
/// Only the variables with a nonzero coefficient are stored, keyed by
/// their index in the shared decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixMap {
    dim: usize,
    constant: Matrix,
    terms: BTreeMap<usize, Matrix>,
}

impl AffineMatrixMap {
    pub fn zero(dim: usize) -> Self {
        Self { dim, constant: Matrix::zeros(dim, dim), terms: BTreeMap::new() }
    }

    pub fn from_constant(constant: Matrix) -> Result<Self, LmiError> {
        constant.require_symmetric()?;
        Ok(Self { dim: constant.rows(), constant: constant.symmetrize(), terms: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant(&self) -> &Matrix {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Matrix)> {
        self.terms.iter().map(|(&k, m)| (k, m))
    }

    pub fn coefficient(&self, var: usize) -> Option<&Matrix> {
        self.terms.get(&var)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// One past the largest variable index used.
    pub fn var_bound(&self) -> usize {
        self.terms.keys().next_back().map_or(0, |k| k + 1)
    }

    /// Adds `coeff` (symmetric, full size) to the coefficient of `var`.
    pub fn add_coefficient(&mut self, var: usize, coeff: &Matrix) -> Result<(), LmiError> {
        if coeff.shape() != (self.dim, self.dim) {
            return Err(LmiError::DimensionMismatch(format!(
                "coefficient is {}x{}, map is {}x{}",
                coeff.rows(),
                coeff.cols(),
                self.dim,
                self.dim
            )));
        }
        coeff.require_symmetric()?;
        self.accumulate(var, |m| m.axpy(1.0, coeff));
        Ok(())
    }

    pub fn add_constant(&mut self, c: &Matrix) -> Result<(), LmiError> {
        if c.shape() != (self.dim, self.dim) {
            return Err(LmiError::DimensionMismatch("constant block size".into()));
        }
        c.require_symmetric()?;
        self.constant.axpy(1.0, c);
        Ok(())
    }

    fn accumulate(&mut self, var: usize, f: impl FnOnce(&mut Matrix)) {
        let dim = self.dim;
        let entry = self.terms.entry(var).or_insert_with(|| Matrix::zeros(dim, dim));
        f(entry);
    }

    /// Adds `block` at `(r0, c0)` and `blockᵀ` at `(c0, r0)`; on the
    /// diagonal (`r0 == c0`) this adds `block + blockᵀ`.
    pub fn add_he(&mut self, var: usize, r0: usize, c0: usize, block: &Matrix) {
        let bt = block.transpose();
        self.accumulate(var, |m| {
            m.add_block(r0, c0, block);
            m.add_block(c0, r0, &bt);
        });
    }

    fn add_he_constant(&mut self, r0: usize, c0: usize, block: &Matrix) {
        self.constant.add_block(r0, c0, block);
        self.constant.add_block(c0, r0, &block.transpose());
    }

    /// `scale · X` at block `(r0, c0)`, mirrored when off the diagonal.
    pub fn add_sym(&mut self, x: SymVar, r0: usize, c0: usize, scale: f64) {
        let half = if r0 == c0 { 0.5 } else { 1.0 };
        for (var, basis) in x.bases() {
            self.add_he(var, r0, c0, &basis.scale(scale * half));
        }
    }

    /// `L X + X Lᵀ` on the diagonal block at `r0` (`L` is `k × n`).
    pub fn add_left_sym(&mut self, left: &Matrix, x: SymVar, r0: usize) {
        for (var, basis) in x.bases() {
            self.add_he(var, r0, r0, &(left * &basis));
        }
    }

    /// `L Y + Yᵀ Lᵀ` on the diagonal block at `r0`.
    pub fn add_left_rect(&mut self, left: &Matrix, y: RectVar, r0: usize) {
        for (var, basis) in y.bases() {
            self.add_he(var, r0, r0, &(left * &basis));
        }
    }

    /// `X R` at block `(r0, c0)` with its transpose mirrored.
    pub fn add_sym_right(&mut self, x: SymVar, right: &Matrix, r0: usize, c0: usize) {
        for (var, basis) in x.bases() {
            self.add_he(var, r0, c0, &(&basis * right));
        }
    }

    /// `s · M` on the diagonal block at `r0`, `M` symmetric.
    pub fn add_scalar(&mut self, var: usize, m: &Matrix, r0: usize) {
        self.add_he(var, r0, r0, &m.scale(0.5));
    }

    /// `M` (symmetric) added to the constant at diagonal block `r0`.
    pub fn add_constant_block(&mut self, m: &Matrix, r0: usize) {
        self.add_he_constant(r0, r0, &m.scale(0.5));
    }

    /// `k · F(z)`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            constant: self.constant.scale(k),
            terms: self.terms.iter().map(|(&v, m)| (v, m.scale(k))).collect(),
        }
    }

    /// Copies this map into block `(r0, c0)` of a `dim`-sized map, mirrored
    /// when off the diagonal.
    pub(crate) fn embed_into(&self, out: &mut AffineMatrixMap, r0: usize, c0: usize) {
        let half = if r0 == c0 { 0.5 } else { 1.0 };
        out.add_he_constant(r0, c0, &self.constant.scale(half));
        for (&var, m) in &self.terms {
            out.add_he(var, r0, c0, &m.scale(half));
        }
    }

    /// `F₀ + Σ z_k F_k`, symmetrised.
    pub fn evaluate(&self, z: &[f64]) -> Result<Matrix, LmiError> {
        if self.var_bound() > z.len() {
            return Err(LmiError::DimensionMismatch(format!(
                "map uses {} variables, decision vector has {}",
                self.var_bound(),
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(LmiError::NonFinite);
        }
        Ok(self.evaluate_unchecked(z))
    }

    pub(crate) fn evaluate_unchecked(&self, z: &[f64]) -> Matrix {
        let mut out = self.constant.clone();
        for (&var, m) in &self.terms {
            let zk = z[var];
            if zk != 0.0 {
                out.axpy(zk, m);
            }
        }
        out.symmetrize()
    }
}
