use super::bank::{ControllerBank, GainKey, LyapunovData, Scheme};
use super::{SynthesisError, SINGULAR_X_TOL};
use crate::linalg::{inverse, sym_eig, Matrix};
use crate::lmi::{
    schur_expand, solve_feasibility, AffineMatrixMap, LmiProblem, LmiSolution, RectVar, SymVar, VarSpace,
    DEFAULT_MARGIN, DEFAULT_MAX_ITER,
};
use crate::model::{IntegratedModel, InterdependentModel, Mode, ProductIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Margin δ of every strict inequality.
    pub margin: f64,
    /// Adds `2ρ·X_i` to every block, asking for `E[V]` to decay at least
    /// like `e^{−2ρt}` instead of merely decreasing.
    pub decay: f64,
    pub max_iter: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { margin: DEFAULT_MARGIN, decay: 0.0, max_iter: DEFAULT_MAX_ITER }
    }
}

impl SynthesisOptions {
    pub fn with_margin(margin: f64) -> Self {
        Self { margin, ..Self::default() }
    }
}

/// Positions of the synthesis unknowns inside the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub x: Vec<SymVar>,
    /// Indexed `[cell][mode]`.
    pub y: Vec<Vec<RectVar>>,
    pub s: Vec<Option<usize>>,
}

/// An LMI problem together with what is needed to turn its solution
/// into gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisProblem {
    pub problem: LmiProblem,
    pub scheme: Scheme,
    /// 0 for the integrated system, else the subsystem number.
    pub system: usize,
    pub cells: ProductIndex,
    pub layout: Layout,
    /// Inverse emission matrix for each cell.
    pub betas: Vec<Matrix>,
}

impl SynthesisProblem {
    pub fn num_modes(&self) -> usize {
        self.layout.x.len()
    }
}

fn assemble(modes: &[Mode], generators: &[&Matrix], opts: &SynthesisOptions) -> (LmiProblem, Layout) {
    let n = modes[0].a.rows();
    let nu = modes[0].b.cols();
    let mut vs = VarSpace::new();
    let x: Vec<SymVar> = modes.iter().map(|_| vs.sym(n)).collect();
    let y: Vec<Vec<RectVar>> = generators.iter().map(|_| modes.iter().map(|_| vs.rect(nu, n)).collect()).collect();
    let s: Vec<Option<usize>> = modes.iter().map(|m| (!m.d.is_zero()).then(|| vs.scalar())).collect();

    let mut p = LmiProblem::new(vs.len(), opts.margin);
    for (c, gamma) in generators.iter().enumerate() {
        for (i, mode) in modes.iter().enumerate() {
            let mut e = AffineMatrixMap::zero(n);
            e.add_left_sym(&mode.a, x[i], 0);
            e.add_left_rect(&mode.b, y[c][i], 0);
            e.add_sym(x[i], 0, 0, gamma[(i, i)] + 2.0 * opts.decay);
            if let Some(si) = s[i] {
                e.add_scalar(si, &(&mode.d * &mode.d.transpose()), 0);
            }
            let mut lambdas = Vec::with_capacity(modes.len() - 1);
            let mut blocks = Vec::with_capacity(modes.len() - 1);
            for j in (0..modes.len()).filter(|&j| j != i) {
                let mut l = AffineMatrixMap::zero(n);
                l.add_sym(x[i], 0, 0, gamma[(i, j)].max(0.0).sqrt());
                lambdas.push(l);
                let mut xj = AffineMatrixMap::zero(n);
                xj.add_sym(x[j], 0, 0, 1.0);
                blocks.push(xj);
            }
            let block = schur_expand(&e, &lambdas, &blocks).expect("blocks share one size");
            p.require_negative(format!("cell {c} mode {i}"), block);
        }
    }
    for (i, xi) in x.iter().enumerate() {
        let mut m = AffineMatrixMap::zero(n);
        m.add_sym(*xi, 0, 0, 1.0);
        p.require_positive(format!("X mode {i}"), m);
    }
    for (i, si) in s.iter().enumerate() {
        if let Some(si) = *si {
            let mut m = AffineMatrixMap::zero(1);
            m.add_scalar(si, &Matrix::identity(1), 0);
            p.require_positive(format!("s mode {i}"), m);
        }
    }

    let mut z = vec![0.0; vs.len()];
    for xi in &x {
        xi.pack(&Matrix::identity(n), &mut z);
    }
    for si in s.iter().flatten() {
        z[*si] = 1.0;
    }
    p.initial = z;
    (p, Layout { x, y, s })
}

fn integrated_problem(
    model: &IntegratedModel,
    opts: &SynthesisOptions,
    scheme: Scheme,
) -> Result<SynthesisProblem, SynthesisError> {
    model.ensure_valid()?;
    let generators: Vec<&Matrix> = model.rates.generators.iter().collect();
    let (problem, layout) = assemble(model.system.modes(), &generators, opts);
    let betas = match scheme {
        Scheme::FullInformation => vec![Matrix::identity(model.num_modes()); model.num_cells()],
        _ => model.obs.betas().to_vec(),
    };
    Ok(SynthesisProblem { problem, scheme, system: 0, cells: model.cells, layout, betas })
}

/// One Schur-form block per (mode, cell) of the integrated system.
pub fn build_centralized(model: &IntegratedModel, opts: &SynthesisOptions) -> Result<SynthesisProblem, SynthesisError> {
    integrated_problem(model, opts, Scheme::Centralized)
}

/// As [`build_centralized`], with gains later recovered as if every mode
/// were observed exactly.
pub fn build_fullinfo(model: &IntegratedModel, opts: &SynthesisOptions) -> Result<SynthesisProblem, SynthesisError> {
    integrated_problem(model, opts, Scheme::FullInformation)
}

/// Two independent problems, one per subsystem, each with a block per
/// (own mode, region pair). Subsystem 1 sees the rates `λ^{m₂}` selected
/// by the partner's region, subsystem 2 the rates `μ^{m₁}`.
pub fn build_distributed(
    model: &InterdependentModel,
    opts: &SynthesisOptions,
) -> Result<(SynthesisProblem, SynthesisProblem), SynthesisError> {
    model.ensure_valid()?;
    let cells = model.cells();
    let pairs: Vec<(usize, usize)> = (0..cells.len()).map(|c| cells.decode(c)).collect();
    let make = |k: usize| {
        let generators: Vec<&Matrix> = pairs
            .iter()
            .map(|&(m1, m2)| if k == 1 { model.rates1.get(m2) } else { model.rates2.get(m1) })
            .collect();
        let betas: Vec<Matrix> = pairs
            .iter()
            .map(|&(m1, m2)| {
                if k == 1 {
                    model.obs1.beta(m1).clone()
                } else {
                    model.obs2.beta(m2).clone()
                }
            })
            .collect();
        let (problem, layout) = assemble(model.system(k).modes(), &generators, opts);
        SynthesisProblem { problem, scheme: Scheme::Distributed, system: k, cells, layout, betas }
    };
    Ok((make(1), make(2)))
}

/// `G_î = Σ_i β_{îi} Y_i X_i⁻¹` for every cell and observed mode.
pub fn recover_gains(solution: &LmiSolution, sp: &SynthesisProblem) -> Result<ControllerBank, SynthesisError> {
    if !solution.is_feasible() {
        return Err(SynthesisError::NotFeasible(solution.status));
    }
    if solution.z.len() != sp.problem.num_vars {
        return Err(SynthesisError::DimensionMismatch(format!(
            "solution has {} entries, problem has {} variables",
            solution.z.len(),
            sp.problem.num_vars
        )));
    }
    let z = &solution.z;
    let mut p = Vec::with_capacity(sp.num_modes());
    for (i, xv) in sp.layout.x.iter().enumerate() {
        let x = xv.unpack(z);
        let min_eig = sym_eig(&x)?.min();
        if min_eig < SINGULAR_X_TOL {
            return Err(SynthesisError::SingularX { mode: i, min_eig });
        }
        p.push(inverse(&x)?.symmetrize());
    }

    let mut bank = ControllerBank::new(sp.scheme);
    for (c, ys) in sp.layout.y.iter().enumerate() {
        let (m1, m2) = sp.cells.decode(c);
        let k: Vec<Matrix> = ys.iter().zip(&p).map(|(yv, pi)| &yv.unpack(z) * pi).collect();
        let beta = &sp.betas[c];
        for obs in 0..sp.num_modes() {
            let mut g = Matrix::zeros(k[0].rows(), k[0].cols());
            for (i, ki) in k.iter().enumerate() {
                g.axpy(beta[(obs, i)], ki);
            }
            bank.gains.insert(GainKey::new(sp.system, obs, m1, m2), g);
        }
    }
    debug_assert_eq!(bank.len(), sp.cells.len() * sp.num_modes());
    bank.certificate.push(LyapunovData {
        system: sp.system,
        p,
        s: sp.layout.s.iter().map(|s| s.map(|k| z[k])).collect(),
        margins: solution.margins.clone(),
    });
    Ok(bank)
}

fn solve_and_recover(sp: &SynthesisProblem, opts: &SynthesisOptions) -> Result<(ControllerBank, LmiSolution), SynthesisError> {
    let sol = solve_feasibility(&sp.problem, opts.max_iter)?;
    let bank = recover_gains(&sol, sp)?;
    Ok((bank, sol))
}

pub fn synthesize_centralized(
    model: &IntegratedModel,
    opts: &SynthesisOptions,
) -> Result<(ControllerBank, LmiSolution), SynthesisError> {
    solve_and_recover(&build_centralized(model, opts)?, opts)
}

pub fn synthesize_fullinfo(
    model: &IntegratedModel,
    opts: &SynthesisOptions,
) -> Result<(ControllerBank, LmiSolution), SynthesisError> {
    solve_and_recover(&build_fullinfo(model, opts)?, opts)
}

/// Solves both subsystem problems concurrently; returns the two
/// subsystem banks (combine them with [`ControllerBank::combine`]).
pub fn synthesize_distributed(
    model: &InterdependentModel,
    opts: &SynthesisOptions,
) -> Result<[(ControllerBank, LmiSolution); 2], SynthesisError> {
    let (p1, p2) = build_distributed(model, opts)?;
    let (r1, r2) = rayon::join(|| solve_and_recover(&p1, opts), || solve_and_recover(&p2, opts));
    Ok([r1?, r2?])
}
