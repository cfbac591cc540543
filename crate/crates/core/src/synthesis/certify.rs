use super::bank::{ControllerBank, GainKey};
use super::SynthesisError;
use crate::linalg::{sym_eig, Matrix};
use crate::lmi::{solve_feasibility, AffineMatrixMap, LmiProblem, SolveStatus, SymVar, VarSpace, DEFAULT_MAX_ITER, MARGIN_SLACK};
use crate::model::{compose_integrated, IntegratedModel, InterdependentModel, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateSource {
    /// `P = diag(P₁, P₂)` assembled from the two subsystem certificates.
    BlockDiagonal,
    /// `P` found by solving the generator LMI for the fixed gains.
    Solved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    /// Lyapunov matrix per integrated mode.
    pub p: Vec<Matrix>,
    /// Disturbance weight per mode; 0 where the mode has no disturbance.
    pub s: Vec<f64>,
    /// `λ_max(Ψ_i^m)`, indexed `[mode][cell]`.
    pub psi_max: Vec<Vec<f64>>,
    pub margin: f64,
    pub certified: bool,
    pub status: SolveStatus,
    pub source: CertificateSource,
}

impl Certificate {
    pub fn worst_psi(&self) -> f64 {
        self.psi_max.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_p_eigenvalue(&self) -> f64 {
        self.p
            .iter()
            .map(|p| sym_eig(p).map_or(f64::NEG_INFINITY, |e| e.min()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Σ_î α_{iî} (A + B G_î)`.
fn averaged_closed_loop(mode: &Mode, alpha_row: &[f64], gains: &[&Matrix]) -> Matrix {
    let mut bg = Matrix::zeros(mode.a.rows(), mode.a.cols());
    for (w, g) in alpha_row.iter().zip(gains) {
        if *w != 0.0 {
            bg.axpy(*w, &(&mode.b * *g));
        }
    }
    &mode.a + &bg
}

fn psi_generic(p: &[Matrix], i: usize, mode: &Mode, gamma: &Matrix, alpha: &Matrix, gains: &[&Matrix], s: f64) -> Matrix {
    let abar = averaged_closed_loop(mode, alpha.row(i), gains);
    let pa = &p[i] * &abar;
    let mut psi = &pa + &pa.transpose();
    for (j, pj) in p.iter().enumerate() {
        psi.axpy(gamma[(i, j)], pj);
    }
    if s != 0.0 && !mode.d.is_zero() {
        let pd = &p[i] * &mode.d;
        psi.axpy(s, &(&pd * &pd.transpose()));
    }
    psi.symmetrize()
}

fn check_dims(p: &[Matrix], model: &IntegratedModel) -> Result<(), SynthesisError> {
    let n = model.system.state_dim();
    if p.len() != model.num_modes() || p.iter().any(|m| m.shape() != (n, n)) {
        return Err(SynthesisError::DimensionMismatch(format!(
            "expected {} Lyapunov matrices of size {n}",
            model.num_modes()
        )));
    }
    Ok(())
}

/// `Ψ_i^m = P_i Ā + ĀᵀP_i + Σ_j γ_ij^m P_j + s P_i D_i D_iᵀ P_i`.
pub fn build_psi(
    p: &[Matrix],
    bank: &ControllerBank,
    model: &IntegratedModel,
    i: usize,
    m: usize,
    s: f64,
) -> Result<Matrix, SynthesisError> {
    check_dims(p, model)?;
    let gains: Vec<Matrix> =
        (0..model.num_modes()).map(|o| bank.integrated_gain(model, o, m)).collect::<Result<_, _>>()?;
    let refs: Vec<&Matrix> = gains.iter().collect();
    Ok(psi_generic(p, i, model.system.mode(i), model.rates.get(m), model.obs.alpha(m), &refs, s))
}

fn psi_table(
    p: &[Matrix],
    s: &[f64],
    table: &[Vec<Matrix>],
    model: &IntegratedModel,
) -> Result<Vec<Vec<f64>>, SynthesisError> {
    (0..model.num_modes())
        .map(|i| {
            (0..model.num_cells())
                .map(|m| {
                    let refs: Vec<&Matrix> = table[m].iter().collect();
                    let psi = psi_generic(p, i, model.system.mode(i), model.rates.get(m), model.obs.alpha(m), &refs, s[i]);
                    Ok(sym_eig(&psi)?.max())
                })
                .collect()
        })
        .collect()
}

fn all_within(psi_max: &[Vec<f64>], margin: f64) -> bool {
    psi_max.iter().flatten().all(|&v| v <= -margin + MARGIN_SLACK)
}

/// Searches for `P_i ≻ δI` with `Ψ_i^m ≺ −δI` at every (mode, cell) for
/// the fixed gains of `bank`. The disturbance term enters through a
/// Schur block in `κ_i`, reported back as `s_i = 1/(κ_i − δ)`.
pub fn certify_gains(model: &IntegratedModel, bank: &ControllerBank, margin: f64) -> Result<Certificate, SynthesisError> {
    model.ensure_valid()?;
    let table = bank.integrated_table(model)?;
    let n = model.system.state_dim();
    let modes = model.system.modes();

    let mut vs = VarSpace::new();
    let pv: Vec<SymVar> = modes.iter().map(|_| vs.sym(n)).collect();
    let kappa: Vec<Option<usize>> = modes.iter().map(|m| (!m.d.is_zero()).then(|| vs.scalar())).collect();
    let mut prob = LmiProblem::new(vs.len(), margin);

    for (m, cell_gains) in table.iter().enumerate() {
        let gamma = model.rates.get(m);
        let alpha = model.obs.alpha(m);
        let refs: Vec<&Matrix> = cell_gains.iter().collect();
        for (i, mode) in modes.iter().enumerate() {
            let abar = averaged_closed_loop(mode, alpha.row(i), &refs);
            let w = if kappa[i].is_some() { mode.d.cols() } else { 0 };
            let mut f = AffineMatrixMap::zero(n + w);
            f.add_left_sym(&abar.transpose(), pv[i], 0);
            for (j, pj) in pv.iter().enumerate() {
                if gamma[(i, j)] != 0.0 {
                    f.add_sym(*pj, 0, 0, gamma[(i, j)]);
                }
            }
            if let Some(k) = kappa[i] {
                f.add_sym_right(pv[i], &mode.d, 0, n);
                f.add_scalar(k, &Matrix::identity(w).scale(-1.0), n);
            }
            prob.require_negative(format!("cell {m} mode {i}"), f);
        }
    }
    for (i, p) in pv.iter().enumerate() {
        let mut f = AffineMatrixMap::zero(n);
        f.add_sym(*p, 0, 0, 1.0);
        prob.require_positive(format!("P mode {i}"), f);
    }
    for (i, k) in kappa.iter().enumerate() {
        if let Some(k) = *k {
            let mut f = AffineMatrixMap::from_constant(Matrix::diag(&[-margin]))?;
            f.add_scalar(k, &Matrix::identity(1), 0);
            prob.require_positive(format!("kappa mode {i}"), f);
        }
    }
    let mut z = vec![0.0; vs.len()];
    for p in &pv {
        p.pack(&Matrix::identity(n), &mut z);
    }
    for k in kappa.iter().flatten() {
        z[*k] = 1.0;
    }
    prob.initial = z;

    let sol = solve_feasibility(&prob, DEFAULT_MAX_ITER)?;
    let p: Vec<Matrix> = pv.iter().map(|v| v.unpack(&sol.z)).collect();
    let s: Vec<f64> = kappa
        .iter()
        .map(|k| k.map_or(0.0, |k| 1.0 / (sol.z[k] - margin).max(margin)))
        .collect();
    let psi_max = psi_table(&p, &s, &table, model)?;
    let p_ok = p.iter().all(|m| sym_eig(m).is_ok_and(|e| e.min() > 0.0));
    let certified = sol.is_feasible() && p_ok && all_within(&psi_max, margin);
    Ok(Certificate { p, s, psi_max, margin, certified, status: sol.status, source: CertificateSource::Solved })
}

/// Largest `λ_max` of the subsystem generator condition over every
/// (own mode, region pair).
fn subsystem_worst(
    model: &InterdependentModel,
    k: usize,
    bank: &ControllerBank,
    p: &[Matrix],
    s: &[Option<f64>],
) -> Result<f64, SynthesisError> {
    let sys = model.system(k);
    let cells = model.cells();
    let mut worst = f64::NEG_INFINITY;
    for c in 0..cells.len() {
        let (m1, m2) = cells.decode(c);
        let (gamma, alpha) =
            if k == 1 { (model.rates1.get(m2), model.obs1.alpha(m1)) } else { (model.rates2.get(m1), model.obs2.alpha(m2)) };
        let gains: Vec<&Matrix> = (0..sys.num_modes())
            .map(|o| bank.gain(GainKey::new(k, o, m1, m2)))
            .collect::<Result<_, _>>()?;
        for (i, si) in s.iter().enumerate() {
            let psi = psi_generic(p, i, sys.mode(i), gamma, alpha, &gains, si.unwrap_or(0.0));
            worst = worst.max(sym_eig(&psi)?.max());
        }
    }
    Ok(worst)
}

/// Certifies the integrated closed loop of two distributed subsystem
/// banks.
///
/// The candidate `P_{(i₁,i₂)} = diag(c₁P_{1,i₁}, c₂P_{2,i₂})` makes every
/// integrated `Ψ` block-diagonal with blocks `c_k Ψ_k`, because the joint
/// generator is a Kronecker sum whose rows sum to zero. Each `c_k` rescales
/// the subsystem's worst eigenvalue to −1. When the candidate misses the
/// margin the integrated problem is solved directly.
pub fn check_corollary(
    model: &InterdependentModel,
    bank1: &ControllerBank,
    bank2: &ControllerBank,
    margin: f64,
) -> Result<Certificate, SynthesisError> {
    let integ = compose_integrated(model)?;
    let combined = ControllerBank::combine(&bank1.subsystem(1), &bank2.subsystem(2));
    let table = combined.integrated_table(&integ)?;

    if let (Some(c1), Some(c2)) = (bank1.certificate_for(1), bank2.certificate_for(2)) {
        let w1 = subsystem_worst(model, 1, &combined, &c1.p, &c1.s)?;
        let w2 = subsystem_worst(model, 2, &combined, &c2.p, &c2.s)?;
        if w1 < 0.0 && w2 < 0.0 {
            let (k1, k2) = (-1.0 / w1, -1.0 / w2);
            let mut p = Vec::with_capacity(integ.num_modes());
            let mut s = Vec::with_capacity(integ.num_modes());
            for j in 0..integ.num_modes() {
                let (i1, i2) = integ.modes.decode(j);
                p.push(Matrix::block_diag(&[&c1.p[i1].scale(k1), &c2.p[i2].scale(k2)]));
                let cand = [c1.s[i1].map(|v| v / k1), c2.s[i2].map(|v| v / k2)];
                s.push(cand.iter().flatten().copied().reduce(f64::min).unwrap_or(0.0));
            }
            let psi_max = psi_table(&p, &s, &table, &integ)?;
            if all_within(&psi_max, margin) {
                return Ok(Certificate {
                    p,
                    s,
                    psi_max,
                    margin,
                    certified: true,
                    status: SolveStatus::Feasible,
                    source: CertificateSource::BlockDiagonal,
                });
            }
        }
    }
    certify_gains(&integ, &combined, margin)
}
