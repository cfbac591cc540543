//! Two interdependent Markov jump linear systems and their integrated form.
//!
//! Each subsystem `k` evolves as `ẋ_k = A x_k + B u_k + D w_k` with the
//! triple selected by its mode. The mode of system 1 jumps with the rate
//! matrix chosen by the region of `x₂`, and system 2's by the region of
//! `x₁`. Modes are hidden; each system emits an observation drawn from a
//! row-stochastic matrix chosen by its own region.
//!
//! Indices are 0-based throughout the library. Product indices follow
//! `(a, b) ↦ a * n_b + b`, for modes and for region cells alike.

use std::fmt;

use thiserror::Error;

use crate::linalg::{self, inverse, kron_sum, pinv, svd, LinalgError, Matrix, DEFAULT_PINV_TOL};

/// Row-sum tolerance for generators and emission matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Tolerance on the identities checked for the derived β matrices.
pub const BETA_TOL: f64 = 1e-8;
/// Relative conditioning cutoff: an emission matrix with condition number
/// above `1 / DEFAULT_BETA_TOL` is pseudo-inverted instead of inverted.
pub const DEFAULT_BETA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("a jump linear system needs at least one mode")]
    NoModes,
    #[error("invalid partition: {0}")]
    BadPartition(String),
    #[error("matrix is not row-stochastic: {0}")]
    NotStochastic(String),
    #[error("invalid model:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

/// One failed invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// The `(A, B, D)` triple of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: Matrix,
    pub b: Matrix,
    pub d: Matrix,
}

impl Mode {
    pub fn new(a: Matrix, b: Matrix, d: Matrix) -> Self {
        Self { a, b, d }
    }
}

/// A linear system whose matrices switch with a finite mode.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLinearSystem {
    modes: Vec<Mode>,
    state_dim: usize,
    input_dim: usize,
    disturbance_dim: usize,
}

impl JumpLinearSystem {
    /// Dimensions are read off the first mode; every other mode must agree.
    pub fn new(modes: Vec<Mode>) -> Result<Self, ModelError> {
        let first = modes.first().ok_or(ModelError::NoModes)?;
        let nx = first.a.rows();
        let nu = first.b.cols();
        let nw = first.d.cols();
        if nx == 0 || nu == 0 {
            return Err(ModelError::DimensionMismatch("state and input dimensions must be positive".into()));
        }
        for (i, m) in modes.iter().enumerate() {
            let expect = [("A", m.a.shape(), (nx, nx)), ("B", m.b.shape(), (nx, nu)), ("D", m.d.shape(), (nx, nw))];
            for (name, got, want) in expect {
                if got != want {
                    return Err(ModelError::DimensionMismatch(format!(
                        "mode {i}: {name} is {}x{}, expected {}x{}",
                        got.0, got.1, want.0, want.1
                    )));
                }
            }
            for (name, mat) in [("A", &m.a), ("B", &m.b), ("D", &m.d)] {
                if !mat.is_finite() {
                    return Err(ModelError::DimensionMismatch(format!("mode {i}: {name} has non-finite entries")));
                }
            }
        }
        Ok(Self { modes, state_dim: nx, input_dim: nu, disturbance_dim: nw })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn disturbance_dim(&self) -> usize {
        self.disturbance_dim
    }
}

/// Shells of squared Euclidean norm: region `m` is
/// `{ x : t_{m-1} ≤ |x|² < t_m }` with `t_0 = 0` and `t_M = ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    thresholds: Vec<f64>,
}

impl RegionPartition {
    pub fn new(thresholds: Vec<f64>) -> Result<Self, ModelError> {
        for (i, t) in thresholds.iter().enumerate() {
            if !t.is_finite() || *t < 0.0 {
                return Err(ModelError::BadPartition(format!("threshold {i} = {t} must be finite and nonnegative")));
            }
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::BadPartition("thresholds must be strictly increasing".into()));
        }
        Ok(Self { thresholds })
    }

    pub fn single() -> Self {
        Self { thresholds: Vec::new() }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn num_regions(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn region_of_norm_sq(&self, norm_sq: f64) -> usize {
        self.thresholds.partition_point(|&t| t <= norm_sq)
    }

    pub fn region_index(&self, x: &[f64]) -> usize {
        self.region_of_norm_sq(x.iter().map(|v| v * v).sum())
    }
}

/// One generator (transition-rate) matrix per region of the partner state.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFamily {
    pub generators: Vec<Matrix>,
}

impl RateFamily {
    pub fn new(generators: Vec<Matrix>) -> Self {
        Self { generators }
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn get(&self, m: usize) -> &Matrix {
        &self.generators[m]
    }

    /// Largest `|γ_ii|` over all regions.
    pub fn max_exit_rate(&self) -> f64 {
        self.generators
            .iter()
            .flat_map(|g| (0..g.rows().min(g.cols())).map(move |i| g[(i, i)].abs()))
            .fold(0.0, f64::max)
    }
}

/// Per-region emission matrices `α^m` (row = true mode, column =
/// observation) together with their inverses or pseudo-inverses `β^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    emissions: Vec<Matrix>,
    betas: Vec<Matrix>,
}

impl ObservationModel {
    pub fn new(emissions: Vec<Matrix>) -> Result<Self, ModelError> {
        let betas = emissions
            .iter()
            .map(|a| invert_emission(a, DEFAULT_BETA_TOL))
            .collect::<Result<_, _>>()?;
        Ok(Self { emissions, betas })
    }

    /// Every region emits the true mode.
    pub fn perfect(num_modes: usize, num_regions: usize) -> Self {
        let i = Matrix::identity(num_modes);
        Self { emissions: vec![i.clone(); num_regions], betas: vec![i; num_regions] }
    }

    pub fn emissions(&self) -> &[Matrix] {
        &self.emissions
    }

    pub fn betas(&self) -> &[Matrix] {
        &self.betas
    }

    pub fn alpha(&self, m: usize) -> &Matrix {
        &self.emissions[m]
    }

    pub fn beta(&self, m: usize) -> &Matrix {
        &self.betas[m]
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }
}

fn stochastic_problem(alpha: &Matrix) -> Option<String> {
    if !alpha.is_square() {
        return Some(format!("emission matrix is {}x{}, expected square", alpha.rows(), alpha.cols()));
    }
    if let Some((i, j, v)) = (0..alpha.rows())
        .flat_map(|i| (0..alpha.cols()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, alpha[(i, j)]))
        .find(|(_, _, v)| !(0.0..=1.0).contains(v))
    {
        return Some(format!("entry ({i},{j}) = {v} outside [0, 1]"));
    }
    alpha
        .row_sums()
        .iter()
        .enumerate()
        .find(|(_, s)| (**s - 1.0).abs() > STOCHASTIC_TOL)
        .map(|(i, s)| format!("row {i} sums to {s}, expected 1 within {STOCHASTIC_TOL:e}"))
}

fn invert_emission(alpha: &Matrix, tol: f64) -> Result<Matrix, ModelError> {
    alpha.require_square()?;
    alpha.require_finite()?;
    let cond = svd(alpha)?.condition_number();
    if cond.is_finite() && cond * tol < 1.0 {
        if let Ok(inv) = inverse(alpha) {
            return Ok(inv);
        }
    }
    Ok(pinv(alpha, DEFAULT_PINV_TOL)?)
}

/// `β = α⁻¹` when `α` is well conditioned (condition number below
/// `1 / tol`), otherwise the Moore-Penrose pseudo-inverse.
pub fn build_beta(alpha: &Matrix, tol: f64) -> Result<Matrix, ModelError> {
    if let Some(problem) = stochastic_problem(alpha) {
        return Err(ModelError::NotStochastic(problem));
    }
    invert_emission(alpha, tol)
}

/// Row-major encoding of a pair index `(a, b) ↦ a * second + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductIndex {
    pub first: usize,
    pub second: usize,
}

impl ProductIndex {
    pub fn new(first: usize, second: usize) -> Self {
        Self { first, second }
    }

    pub fn len(&self) -> usize {
        self.first * self.second
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, a: usize, b: usize) -> usize {
        debug_assert!(a < self.first && b < self.second);
        a * self.second + b
    }

    pub fn decode(&self, i: usize) -> (usize, usize) {
        (i / self.second, i % self.second)
    }
}

/// The two coupled subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct InterdependentModel {
    pub sys1: JumpLinearSystem,
    pub sys2: JumpLinearSystem,
    /// Partition of `x₁`.
    pub part1: RegionPartition,
    /// Partition of `x₂`.
    pub part2: RegionPartition,
    /// `λ`, one generator for System 1 per region of `x₂`.
    pub rates1: RateFamily,
    /// `μ`, one generator for System 2 per region of `x₁`.
    pub rates2: RateFamily,
    /// System 1 emissions, per region of `x₁`.
    pub obs1: ObservationModel,
    /// System 2 emissions, per region of `x₂`.
    pub obs2: ObservationModel,
}

impl InterdependentModel {
    pub fn system(&self, k: usize) -> &JumpLinearSystem {
        match k {
            1 => &self.sys1,
            2 => &self.sys2,
            _ => panic!("system index must be 1 or 2, got {k}"),
        }
    }

    pub fn partition(&self, k: usize) -> &RegionPartition {
        if k == 1 {
            &self.part1
        } else {
            &self.part2
        }
    }

    pub fn rates(&self, k: usize) -> &RateFamily {
        if k == 1 {
            &self.rates1
        } else {
            &self.rates2
        }
    }

    pub fn observations(&self, k: usize) -> &ObservationModel {
        if k == 1 {
            &self.obs1
        } else {
            &self.obs2
        }
    }

    pub fn cells(&self) -> ProductIndex {
        ProductIndex::new(self.part1.num_regions(), self.part2.num_regions())
    }

    /// All invariants; an empty list means the model is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let checks = [
            ("rates1", &self.rates1, self.sys1.num_modes(), self.part2.num_regions(), "regions of partition2"),
            ("rates2", &self.rates2, self.sys2.num_modes(), self.part1.num_regions(), "regions of partition1"),
        ];
        for (name, rates, n, regions, what) in checks {
            if rates.len() != regions {
                out.push(Violation {
                    field: name.into(),
                    message: format!("{} generators but {regions} {what}", rates.len()),
                });
            }
            for (m, g) in rates.generators.iter().enumerate() {
                check_generator(&format!("{name}[{m}]"), g, n, &mut out);
            }
        }
        let checks = [
            ("obs1", &self.obs1, self.sys1.num_modes(), self.part1.num_regions(), "regions of partition1"),
            ("obs2", &self.obs2, self.sys2.num_modes(), self.part2.num_regions(), "regions of partition2"),
        ];
        for (name, obs, n, regions, what) in checks {
            if obs.len() != regions {
                out.push(Violation {
                    field: name.into(),
                    message: format!("{} emission matrices but {regions} {what}", obs.len()),
                });
            }
            check_observations(name, obs, n, &mut out);
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(v))
        }
    }

    fn check_dims(&self, x1: &[f64], x2: &[f64]) -> Result<(), ModelError> {
        if x1.len() != self.sys1.state_dim() || x2.len() != self.sys2.state_dim() {
            return Err(ModelError::DimensionMismatch(format!(
                "state lengths ({}, {}) do not match system dimensions ({}, {})",
                x1.len(),
                x2.len(),
                self.sys1.state_dim(),
                self.sys2.state_dim()
            )));
        }
        Ok(())
    }

    /// `(m₁, m₂)` for the current pair of states.
    pub fn regions_at(&self, x1: &[f64], x2: &[f64]) -> Result<(usize, usize), ModelError> {
        self.check_dims(x1, x2)?;
        Ok((self.part1.region_index(x1), self.part2.region_index(x2)))
    }

    /// The `(λ, μ)` generators in force at `(x₁, x₂)`.
    pub fn generator_at(&self, x1: &[f64], x2: &[f64]) -> Result<(&Matrix, &Matrix), ModelError> {
        let (m1, m2) = self.regions_at(x1, x2)?;
        Ok((self.rates1.get(m2), self.rates2.get(m1)))
    }
}

fn check_generator(field: &str, g: &Matrix, n: usize, out: &mut Vec<Violation>) {
    let mut push = |message: String| out.push(Violation { field: field.into(), message });
    if g.shape() != (n, n) {
        push(format!("generator is {}x{}, expected {n}x{n}", g.rows(), g.cols()));
        return;
    }
    if !g.is_finite() {
        push("generator has non-finite entries".into());
        return;
    }
    for i in 0..n {
        for j in 0..n {
            let v = g[(i, j)];
            if i != j && v < 0.0 {
                push(format!("negative off-diagonal rate {v} at ({i},{j})"));
            }
            if i == j && v > 0.0 {
                push(format!("positive diagonal rate {v} at ({i},{i})"));
            }
        }
    }
    for (i, s) in g.row_sums().into_iter().enumerate() {
        if s.abs() > STOCHASTIC_TOL {
            push(format!("row {i} sums to {s}, expected 0 within {STOCHASTIC_TOL:e}"));
        }
    }
}

fn check_observations(name: &str, obs: &ObservationModel, n: usize, out: &mut Vec<Violation>) {
    for (m, (alpha, beta)) in obs.emissions.iter().zip(&obs.betas).enumerate() {
        let field = format!("{name}[{m}]");
        if alpha.shape() != (n, n) {
            out.push(Violation {
                field,
                message: format!("emission matrix is {}x{}, expected {n}x{n}", alpha.rows(), alpha.cols()),
            });
            continue;
        }
        if let Some(problem) = stochastic_problem(alpha) {
            out.push(Violation { field, message: format!("not row-stochastic: {problem}") });
            continue;
        }
        let aba = &(alpha * beta) * alpha;
        let err = (&aba - alpha).max_abs();
        if err > BETA_TOL {
            out.push(Violation { field, message: format!("alpha*beta*alpha differs from alpha by {err:e} (tolerance {BETA_TOL:e})") });
        }
    }
}

/// Dimensions of the two blocks of the integrated state, input and
/// disturbance vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockDims {
    pub state: (usize, usize),
    pub input: (usize, usize),
    pub disturbance: (usize, usize),
}

/// The two subsystems viewed as one jump system over `S₁ × S₂` with
/// `M₁·M₂` region cells.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedModel {
    pub system: JumpLinearSystem,
    pub modes: ProductIndex,
    pub cells: ProductIndex,
    pub part1: RegionPartition,
    pub part2: RegionPartition,
    /// Joint generator per cell.
    pub rates: RateFamily,
    /// Joint emission per cell.
    pub obs: ObservationModel,
    pub dims: BlockDims,
}

impl IntegratedModel {
    pub fn num_modes(&self) -> usize {
        self.system.num_modes()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_index(&self, x: &[f64]) -> Result<usize, ModelError> {
        let (n1, n2) = self.dims.state;
        if x.len() != n1 + n2 {
            return Err(ModelError::DimensionMismatch(format!("state has {} entries, expected {}", x.len(), n1 + n2)));
        }
        let (x1, x2) = x.split_at(n1);
        Ok(self.cells.encode(self.part1.region_index(x1), self.part2.region_index(x2)))
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.num_modes();
        let cells = self.num_cells();
        if self.modes.len() != n {
            out.push(Violation { field: "modes".into(), message: format!("index covers {} modes, system has {n}", self.modes.len()) });
        }
        if self.rates.len() != cells {
            out.push(Violation { field: "rates".into(), message: format!("{} generators for {cells} cells", self.rates.len()) });
        }
        if self.obs.len() != cells {
            out.push(Violation { field: "obs".into(), message: format!("{} emission matrices for {cells} cells", self.obs.len()) });
        }
        for (m, g) in self.rates.generators.iter().enumerate() {
            check_generator(&format!("rates[{m}]"), g, n, &mut out);
        }
        check_observations("obs", &self.obs, n, &mut out);
        out
    }

    pub fn ensure_valid(&self) -> Result<(), ModelError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(v))
        }
    }

    /// Same model with every emission matrix replaced by the identity.
    pub fn with_perfect_observations(&self) -> Self {
        Self { obs: ObservationModel::perfect(self.num_modes(), self.num_cells()), ..self.clone() }
    }
}

/// Builds the integrated model: block-diagonal system matrices, the
/// Kronecker sum `λ^{m₂} ⊕ μ^{m₁}` as the joint generator of cell
/// `(m₁, m₂)`, and `α^{1,m₁} ⊗ α^{2,m₂}` as its joint emission matrix.
pub fn compose_integrated(model: &InterdependentModel) -> Result<IntegratedModel, ModelError> {
    model.ensure_valid()?;
    let (s1, s2) = (&model.sys1, &model.sys2);
    let modes = ProductIndex::new(s1.num_modes(), s2.num_modes());
    let cells = model.cells();
    let mut joint = Vec::with_capacity(modes.len());
    for i1 in 0..modes.first {
        for i2 in 0..modes.second {
            let (a, b) = (s1.mode(i1), s2.mode(i2));
            joint.push(Mode::new(
                Matrix::block_diag(&[&a.a, &b.a]),
                Matrix::block_diag(&[&a.b, &b.b]),
                Matrix::block_diag(&[&a.d, &b.d]),
            ));
        }
    }
    let mut generators = Vec::with_capacity(cells.len());
    let mut emissions = Vec::with_capacity(cells.len());
    for m1 in 0..cells.first {
        for m2 in 0..cells.second {
            generators.push(kron_sum(model.rates1.get(m2), model.rates2.get(m1))?);
            emissions.push(model.obs1.alpha(m1).kron(model.obs2.alpha(m2)));
        }
    }
    Ok(IntegratedModel {
        system: JumpLinearSystem::new(joint)?,
        modes,
        cells,
        part1: model.part1.clone(),
        part2: model.part2.clone(),
        rates: RateFamily::new(generators),
        obs: ObservationModel::new(emissions)?,
        dims: BlockDims {
            state: (s1.state_dim(), s2.state_dim()),
            input: (s1.input_dim(), s2.input_dim()),
            disturbance: (s1.disturbance_dim(), s2.disturbance_dim()),
        },
    })
}

/// Stationary distribution `π` of a generator (`π G = 0`, `Σπ = 1`),
/// from the null space of `Gᵀ` with the normalisation appended.
pub fn stationary_distribution(g: &Matrix) -> Result<Vec<f64>, ModelError> {
    g.require_square()?;
    let n = g.rows();
    let mut a = Matrix::zeros(n + 1, n);
    a.set_block(0, 0, &g.transpose());
    for j in 0..n {
        a[(n, j)] = 1.0;
    }
    let mut b = Matrix::zeros(n + 1, 1);
    b[(n, 0)] = 1.0;
    Ok(linalg::solve_least_squares(&a, &b)?.into_vec())
}
