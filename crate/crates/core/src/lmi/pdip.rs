//! Primal-dual interior-point method for the epigraph problem
//!
//! ```text
//! minimise t  subject to  S_c = tI − H_c(z) ⪰ 0,   |z_k| ≤ R,
//! ```
//!
//! treated as the dual of a block-diagonal SDP whose primal variable
//! `X = (X_c, x_box)` is a dual certificate: for any `X ⪰ 0`, weak
//! duality gives a lower bound on `min t`, and a bound above `−δ` proves
//! that no `z` in the box meets the margin. Steps use the HKM search
//! direction with Mehrotra's predictor-corrector.
//!
//! The dual iterate is kept exactly feasible by recomputing `S_c` from
//! `(z, t)`; only the primal side starts infeasible. Coefficient matrices
//! are stored sparsely, since barely any of their entries are nonzero.

use super::barrier::{Outcome, StopRule};
use super::dense::{inverse_factor, max_step, ScaledSpd};
use super::{AffineMatrixMap, LmiError, SolveStatus};
use crate::linalg::{cholesky, Matrix};

/// Fraction of the distance to the cone boundary taken per step.
const STEP_FRACTION: f64 = 0.95;

struct Term {
    var: usize,
    /// Every nonzero `(row, col, value)`, both triangles.
    entries: Vec<(usize, usize, f64)>,
}

struct Block<'a> {
    map: &'a AffineMatrixMap,
    terms: Vec<Term>,
}

impl<'a> Block<'a> {
    fn new(map: &'a AffineMatrixMap) -> Self {
        let d = map.dim();
        let terms = map
            .terms()
            .map(|(var, f)| {
                let mut entries = Vec::new();
                for p in 0..d {
                    for q in 0..d {
                        if f[(p, q)] != 0.0 {
                            entries.push((p, q, f[(p, q)]));
                        }
                    }
                }
                Term { var, entries }
            })
            .collect();
        Self { map, terms }
    }

    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn slack(&self, z: &[f64], t: f64) -> Matrix {
        let mut s = self.map.evaluate_unchecked(z).scale(-1.0);
        for i in 0..s.rows() {
            s[(i, i)] += t;
        }
        s
    }

    /// `S(Δz, Δt) − S(0, 0)`, the change of the slack along a direction.
    fn slack_change(&self, dz: &[f64], dt: f64) -> Matrix {
        let d = self.dim();
        let mut s = Matrix::identity(d).scale(dt);
        for term in &self.terms {
            let v = dz[term.var];
            if v != 0.0 {
                for &(p, q, a) in &term.entries {
                    s[(p, q)] -= v * a;
                }
            }
        }
        s
    }
}

fn sparse_dot(entries: &[(usize, usize, f64)], m: &Matrix) -> f64 {
    entries.iter().map(|&(p, q, a)| a * m[(p, q)]).sum()
}

/// Dense iterate of one block.
struct BlockState {
    x: Matrix,
    z: Matrix,
    z_inv: Matrix,
    /// `L⁻¹` for the Cholesky factors of `X` and `Z`.
    x_li: Matrix,
    z_li: Matrix,
}

impl BlockState {
    fn new(x: Matrix, z: Matrix) -> Option<Self> {
        let (x_li, _) = inverse_factor(&x)?;
        let (z_li, _) = inverse_factor(&z)?;
        let z_inv = (&z_li.transpose() * &z_li).symmetrize();
        Some(Self { x, z, z_inv, x_li, z_li })
    }
}

struct Direction {
    dz: Vec<f64>,
    dt: f64,
    dx_blocks: Vec<Matrix>,
    ds_blocks: Vec<Matrix>,
    dx_up: Vec<f64>,
    dx_lo: Vec<f64>,
}

/// Everything the solver keeps between iterations.
struct Iterate {
    z: Vec<f64>,
    t: f64,
    blocks: Vec<BlockState>,
    /// Box multipliers and slacks `R − z_k`, `R + z_k`.
    x_up: Vec<f64>,
    x_lo: Vec<f64>,
    s_up: Vec<f64>,
    s_lo: Vec<f64>,
}

impl Iterate {
    fn mu(&self, total_dim: f64) -> f64 {
        let mut c: f64 = self.blocks.iter().map(|b| b.x.dot(&b.z)).sum();
        for k in 0..self.z.len() {
            c += self.x_up[k] * self.s_up[k] + self.x_lo[k] * self.s_lo[k];
        }
        c / total_dim
    }

    /// Weak-duality bound on `min t` from the primal iterate.
    fn lower_bound(&self, blocks: &[Block], radius: f64) -> f64 {
        let mut trace = 0.0;
        let mut cval = 0.0;
        let mut a = vec![0.0; self.z.len()];
        for (b, st) in blocks.iter().zip(&self.blocks) {
            trace += st.x.trace();
            cval += st.x.dot(b.map.constant());
            for term in &b.terms {
                a[term.var] += sparse_dot(&term.entries, &st.x);
            }
        }
        let l1: f64 = a.iter().map(|v| v.abs()).sum();
        (cval - radius * l1) / trace
    }
}

/// Schur complement `M_ij = ⟨A_i, X A_j Z⁻¹⟩`, the last index being `t`.
fn schur_matrix(blocks: &[Block], it: &Iterate) -> Matrix {
    let n = it.z.len();
    let mut m = Matrix::zeros(n + 1, n + 1);
    for (b, st) in blocks.iter().zip(&it.blocks) {
        let d = b.dim();
        let mut g = Matrix::zeros(d, d);
        for tj in &b.terms {
            for v in g.as_mut_slice() {
                *v = 0.0;
            }
            for &(p, q, a) in &tj.entries {
                for r in 0..d {
                    let xa = a * st.x[(r, p)];
                    if xa == 0.0 {
                        continue;
                    }
                    let zi = st.z_inv.row(q);
                    let row = &mut g.as_mut_slice()[r * d..(r + 1) * d];
                    for (gv, zv) in row.iter_mut().zip(zi) {
                        *gv += xa * zv;
                    }
                }
            }
            for ti in &b.terms {
                m[(ti.var, tj.var)] += sparse_dot(&ti.entries, &g);
            }
            m[(n, tj.var)] -= g.trace();
        }
        // the t column, coefficient −I
        let g = (&st.x * &st.z_inv).scale(-1.0);
        for ti in &b.terms {
            m[(ti.var, n)] += sparse_dot(&ti.entries, &g);
        }
        m[(n, n)] -= g.trace();
    }
    for k in 0..n {
        m[(k, k)] += it.x_up[k] / it.s_up[k] + it.x_lo[k] / it.s_lo[k];
    }
    m.symmetrize()
}

/// Direction for complementarity targets `T_c` (blocks) and `τ` (box):
/// `ΔX = T − X − sym(X ΔS S⁻¹)` with `ΔS` from `Δy`.
fn direction(
    blocks: &[Block],
    it: &Iterate,
    spd: &ScaledSpd,
    targets: &[Matrix],
    tau_up: &[f64],
    tau_lo: &[f64],
) -> Option<Direction> {
    let n = it.z.len();
    // rhs = b − A(T), with b = −e_t
    let mut rhs = vec![0.0; n + 1];
    rhs[n] = -1.0;
    for (b, tm) in blocks.iter().zip(targets) {
        for term in &b.terms {
            rhs[term.var] -= sparse_dot(&term.entries, tm);
        }
        rhs[n] += tm.trace();
    }
    for k in 0..n {
        rhs[k] -= tau_up[k] - tau_lo[k];
    }
    let dy = spd.solve(&rhs)?;
    let (dz, dt) = (dy[..n].to_vec(), dy[n]);

    let mut dx_blocks = Vec::with_capacity(blocks.len());
    let mut ds_blocks = Vec::with_capacity(blocks.len());
    for ((b, st), tm) in blocks.iter().zip(&it.blocks).zip(targets) {
        let ds = b.slack_change(&dz, dt);
        let xdsz = &(&st.x * &ds) * &st.z_inv;
        let mut dx = tm - &st.x;
        dx.axpy(-1.0, &xdsz.symmetrize());
        dx_blocks.push(dx.symmetrize());
        ds_blocks.push(ds);
    }
    let mut dx_up = vec![0.0; n];
    let mut dx_lo = vec![0.0; n];
    for k in 0..n {
        // s_up = R − z_k, s_lo = R + z_k
        dx_up[k] = tau_up[k] - it.x_up[k] + it.x_up[k] * dz[k] / it.s_up[k];
        dx_lo[k] = tau_lo[k] - it.x_lo[k] - it.x_lo[k] * dz[k] / it.s_lo[k];
    }
    Some(Direction { dz, dt, dx_blocks, ds_blocks, dx_up, dx_lo })
}

/// Largest primal and dual step lengths, capped at 1.
fn step_lengths(it: &Iterate, dir: &Direction) -> (f64, f64) {
    let mut ap: f64 = 1.0;
    let mut ad: f64 = 1.0;
    for (st, (dx, ds)) in it.blocks.iter().zip(dir.dx_blocks.iter().zip(&dir.ds_blocks)) {
        ap = max_step(&st.x_li, dx, ap);
        ad = max_step(&st.z_li, ds, ad);
    }
    for k in 0..it.z.len() {
        let ratio = |v: f64, dv: f64| if dv < 0.0 { -v / dv } else { f64::INFINITY };
        ap = ap.min(ratio(it.x_up[k], dir.dx_up[k])).min(ratio(it.x_lo[k], dir.dx_lo[k]));
        ad = ad.min(ratio(it.s_up[k], -dir.dz[k])).min(ratio(it.s_lo[k], dir.dz[k]));
    }
    (ap, ad)
}

fn complementarity_after(it: &Iterate, dir: &Direction, ap: f64, ad: f64) -> f64 {
    let mut c = 0.0;
    for (st, (dx, ds)) in it.blocks.iter().zip(dir.dx_blocks.iter().zip(&dir.ds_blocks)) {
        let mut x = st.x.clone();
        x.axpy(ap, dx);
        let mut s = st.z.clone();
        s.axpy(ad, ds);
        c += x.dot(&s);
    }
    for k in 0..it.z.len() {
        c += (it.x_up[k] + ap * dir.dx_up[k]) * (it.s_up[k] - ad * dir.dz[k]);
        c += (it.x_lo[k] + ap * dir.dx_lo[k]) * (it.s_lo[k] + ad * dir.dz[k]);
    }
    c
}

fn holds(blocks: &[Block], z: &[f64], delta: f64) -> bool {
    blocks.iter().all(|b| {
        let mut s = b.map.evaluate_unchecked(z).scale(-1.0);
        for i in 0..s.rows() {
            s[(i, i)] -= delta;
        }
        cholesky(&s).is_ok()
    })
}

/// Builds an iterate from `(z, t)` and primal blocks, or None when some
/// matrix has left the cone.
fn assemble(blocks: &[Block], z: Vec<f64>, t: f64, xs: Vec<Matrix>, x_up: Vec<f64>, x_lo: Vec<f64>, radius: f64) -> Option<Iterate> {
    let mut states = Vec::with_capacity(blocks.len());
    for (b, x) in blocks.iter().zip(xs) {
        states.push(BlockState::new(x, b.slack(&z, t))?);
    }
    let s_up: Vec<f64> = z.iter().map(|v| radius - v).collect();
    let s_lo: Vec<f64> = z.iter().map(|v| radius + v).collect();
    if !s_up.iter().chain(&s_lo).chain(&x_up).chain(&x_lo).all(|v| *v > 0.0) {
        return None;
    }
    Some(Iterate { z, t, blocks: states, x_up, x_lo, s_up, s_lo })
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
    if maps.is_empty() {
        return Ok(Outcome { z: z0, iterations: 0, status: SolveStatus::Feasible });
    }
    if z0.iter().any(|v| v.abs() >= radius) {
        return Err(LmiError::DimensionMismatch(format!("starting point lies outside the search box {radius:e}")));
    }
    let blocks: Vec<Block> = maps.iter().map(Block::new).collect();
    let total_dim = (blocks.iter().map(Block::dim).sum::<usize>() + 2 * n) as f64;

    let mut t0 = f64::NEG_INFINITY;
    for map in maps {
        t0 = t0.max(crate::linalg::max_eigenvalue(&map.evaluate_unchecked(&z0))?);
    }
    let t = t0 + 1.0 + 0.1 * t0.abs();
    // Centred start: X_c = ν S_c⁻¹ with Σ tr X_c = 1, box multipliers ν/s.
    let inverses: Vec<Matrix> = blocks
        .iter()
        .map(|b| {
            let (li, _) = inverse_factor(&b.slack(&z0, t)).expect("slack is positive definite at the start");
            (&li.transpose() * &li).symmetrize()
        })
        .collect();
    let nu = 1.0 / inverses.iter().map(Matrix::trace).sum::<f64>();
    let xs: Vec<Matrix> = inverses.iter().map(|m| m.scale(nu)).collect();
    let x_up: Vec<f64> = z0.iter().map(|v| nu / (radius - v)).collect();
    let x_lo: Vec<f64> = z0.iter().map(|v| nu / (radius + v)).collect();
    let mut it = assemble(&blocks, z0, t, xs, x_up, x_lo, radius).ok_or(LmiError::NonFinite)?;

    let mut feasible: Option<Vec<f64>> = None;
    let mut iterations = 0;
    let status = loop {
        if holds(&blocks, &it.z, delta) && accept(&it.z)? {
            if stop == StopRule::FirstFeasible {
                break SolveStatus::Feasible;
            }
            feasible = Some(it.z.clone());
        }
        let lb = it.lower_bound(&blocks, radius);
        if feasible.is_none() && lb > -delta {
            break SolveStatus::Infeasible;
        }
        if feasible.is_some() && it.t - lb <= 1e-9 * it.t.abs().max(1.0) {
            break SolveStatus::Feasible;
        }
        if iterations >= max_iter {
            break SolveStatus::IterationLimit;
        }
        iterations += 1;

        let mu = it.mu(total_dim);
        let Some(spd) = ScaledSpd::new(&schur_matrix(&blocks, &it)) else { break SolveStatus::IterationLimit };
        let zeros_b: Vec<Matrix> = blocks.iter().map(|b| Matrix::zeros(b.dim(), b.dim())).collect();
        let zeros_v = vec![0.0; n];
        let Some(pred) = direction(&blocks, &it, &spd, &zeros_b, &zeros_v, &zeros_v) else {
            break SolveStatus::IterationLimit;
        };
        let (ap, ad) = step_lengths(&it, &pred);
        let mu_aff = complementarity_after(&it, &pred, ap, ad) / total_dim;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let targets: Vec<Matrix> = it
            .blocks
            .iter()
            .zip(pred.dx_blocks.iter().zip(&pred.ds_blocks))
            .map(|(st, (dx, ds))| {
                let mut tm = st.z_inv.scale(sigma * mu);
                tm.axpy(-1.0, &(&(dx * ds) * &st.z_inv).symmetrize());
                tm
            })
            .collect();
        let tau_up: Vec<f64> =
            (0..n).map(|k| (sigma * mu - pred.dx_up[k] * (-pred.dz[k])) / it.s_up[k]).collect();
        let tau_lo: Vec<f64> = (0..n).map(|k| (sigma * mu - pred.dx_lo[k] * pred.dz[k]) / it.s_lo[k]).collect();
        let Some(corr) = direction(&blocks, &it, &spd, &targets, &tau_up, &tau_lo) else {
            break SolveStatus::IterationLimit;
        };
        let (ap, ad) = step_lengths(&it, &corr);
        let (ap, ad) = ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0));

        let z: Vec<f64> = it.z.iter().zip(&corr.dz).map(|(v, d)| v + ad * d).collect();
        let t = it.t + ad * corr.dt;
        let xs: Vec<Matrix> = it
            .blocks
            .iter()
            .zip(&corr.dx_blocks)
            .map(|(st, dx)| {
                let mut x = st.x.clone();
                x.axpy(ap, dx);
                x.symmetrize()
            })
            .collect();
        let x_up: Vec<f64> = it.x_up.iter().zip(&corr.dx_up).map(|(v, d)| v + ap * d).collect();
        let x_lo: Vec<f64> = it.x_lo.iter().zip(&corr.dx_lo).map(|(v, d)| v + ap * d).collect();
        match assemble(&blocks, z, t, xs, x_up, x_lo, radius) {
            Some(next) => it = next,
            None => break SolveStatus::IterationLimit,
        }
    };
    let z = match (status, feasible) {
        (SolveStatus::Feasible, Some(z)) if stop == StopRule::Converge && !holds(&blocks, &it.z, delta) => z,
        _ => it.z,
    };
    Ok(Outcome { z, iterations, status })
}
