//! Closed-loop simulation of the interdependent systems and Monte Carlo
//! estimation of `E[∫|x|² dt]`.
//!
//! Time advances on a fixed grid `t_k = kΔ`. At each grid point the
//! regions are read off the current state, observations are refreshed,
//! the feedback gains are looked up and the sample is recorded. The state
//! then takes one RK4 step of `ẋ = (A + BG)x + Dw(t_k)` with mode, gain and
//! disturbance held fixed, and each chain jumps from `i` to `j` with
//! probability `γ_ij Δ` using the rates of the regions at `t_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{compose_integrated, InterdependentModel, ModelError, STOCHASTIC_TOL};
use crate::synthesis::{ControllerBank, GainKey, SynthesisError};

/// Upper bound on `Δ · max |γ_ii|`, the per-step exit probability.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid generator row: {0}")]
    InvalidGenerator(String),
    #[error("emission row is not stochastic: {0}")]
    NotStochastic(String),
    #[error("step {dt} too large: the rates require dt <= {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("state became non-finite at t = {t} in run {run}")]
    Diverged { run: usize, t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

/// When the observed modes are redrawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationPolicy {
    /// Redraw `θ̂_k` whenever `θ_k` or the region pair changes.
    OnChange,
    /// Redraw both observations every `period` seconds (rounded to whole
    /// steps, at least one).
    Periodic(f64),
}

/// `w(t) = amplitude · e^{−decay·t} · sin(frequency·t)`, stacked as
/// `(w₁, w₂)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSpec {
    Zero,
    DecayingSine { amplitude: Vec<f64>, decay: f64, frequency: f64 },
}

impl DisturbanceSpec {
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            DisturbanceSpec::Zero => out.fill(0.0),
            DisturbanceSpec::DecayingSine { amplitude, decay, frequency } => {
                let s = (-decay * t).exp() * (frequency * t).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = a * s;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub policy: ObservationPolicy,
    pub disturbance: DisturbanceSpec,
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, seed: u64) -> Self {
        Self { dt, horizon, seed, policy: ObservationPolicy::OnChange, disturbance: DisturbanceSpec::Zero }
    }

    /// Number of steps after the initial grid point.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Largest step the rates of `model` allow.
    pub fn max_dt(model: &InterdependentModel) -> f64 {
        let rate = model.rates1.max_exit_rate().max(model.rates2.max_exit_rate());
        if rate == 0.0 {
            f64::INFINITY
        } else {
            MAX_JUMP_PROBABILITY / rate
        }
    }

    pub fn validate(&self, model: &InterdependentModel) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidConfig(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        let bound = Self::max_dt(model);
        if self.dt > bound {
            return Err(SimError::StepTooLarge { dt: self.dt, bound });
        }
        if let ObservationPolicy::Periodic(p) = self.policy {
            if !(p > 0.0 && p.is_finite()) {
                return Err(SimError::InvalidConfig(format!("observation period must be positive, got {p}")));
            }
        }
        if let DisturbanceSpec::DecayingSine { amplitude, decay, frequency } = &self.disturbance {
            let nw = model.sys1.disturbance_dim() + model.sys2.disturbance_dim();
            if amplitude.len() != nw {
                return Err(SimError::InvalidConfig(format!(
                    "disturbance amplitude has {} entries, the systems have {nw} disturbance inputs",
                    amplitude.len()
                )));
            }
            if !decay.is_finite() || *decay <= 0.0 || !frequency.is_finite() || amplitude.iter().any(|a| !a.is_finite()) {
                return Err(SimError::InvalidConfig("disturbance needs decay > 0 and finite parameters".into()));
            }
        }
        Ok(())
    }
}

/// Initial continuous states and modes.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub mode1: usize,
    pub mode2: usize,
}

impl InitialState {
    /// Both chains start in their first mode.
    pub fn new(x1: Vec<f64>, x2: Vec<f64>) -> Self {
        Self { x1, x2, mode1: 0, mode2: 0 }
    }
}

/// One recorded grid point.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub step: usize,
    pub t: f64,
    pub x1: &'a [f64],
    pub x2: &'a [f64],
    pub modes: (usize, usize),
    pub observations: (usize, usize),
    pub regions: (usize, usize),
    pub u1: &'a [f64],
    pub u2: &'a [f64],
}

impl Sample<'_> {
    pub fn norm_sq(&self) -> f64 {
        self.x1.iter().chain(self.x2).map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub x1: Vec<Vec<f64>>,
    pub x2: Vec<Vec<f64>>,
    pub mode1: Vec<usize>,
    pub mode2: Vec<usize>,
    pub obs1: Vec<usize>,
    pub obs2: Vec<usize>,
    pub region1: Vec<usize>,
    pub region2: Vec<usize>,
    pub u1: Vec<Vec<f64>>,
    pub u2: Vec<Vec<f64>>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, s: &Sample<'_>) {
        self.t.push(s.t);
        self.x1.push(s.x1.to_vec());
        self.x2.push(s.x2.to_vec());
        self.mode1.push(s.modes.0);
        self.mode2.push(s.modes.1);
        self.obs1.push(s.observations.0);
        self.obs2.push(s.observations.1);
        self.region1.push(s.regions.0);
        self.region2.push(s.regions.1);
        self.u1.push(s.u1.to_vec());
        self.u2.push(s.u2.to_vec());
    }

    /// `‖(x₁, x₂)‖` at the last grid point.
    pub fn terminal_norm(&self) -> f64 {
        match (self.x1.last(), self.x2.last()) {
            (Some(a), Some(b)) => a.iter().chain(b).map(|v| v * v).sum::<f64>().sqrt(),
            _ => 0.0,
        }
    }
}

/// Next mode of a chain sitting in `i` with generator row `row`, from a
/// single uniform draw.
pub fn step_mode<R: Rng + ?Sized>(rng: &mut R, i: usize, row: &[f64], dt: f64) -> Result<usize, SimError> {
    check_generator_row(i, row, dt)?;
    Ok(jump(rng.gen::<f64>(), i, row, dt))
}

fn check_generator_row(i: usize, row: &[f64], dt: f64) -> Result<(), SimError> {
    if i >= row.len() {
        return Err(SimError::InvalidGenerator(format!("mode {i} outside a row of length {}", row.len())));
    }
    if let Some((j, v)) = row.iter().enumerate().find(|&(j, v)| !v.is_finite() || (j != i && *v < 0.0)) {
        return Err(SimError::InvalidGenerator(format!("entry {j} = {v}")));
    }
    let sum: f64 = row.iter().sum();
    if sum.abs() > STOCHASTIC_TOL {
        return Err(SimError::InvalidGenerator(format!("row sums to {sum}")));
    }
    if 1.0 + row[i] * dt < 0.0 {
        return Err(SimError::InvalidGenerator(format!("exit probability {} exceeds 1", -row[i] * dt)));
    }
    Ok(())
}

fn jump(u: f64, i: usize, row: &[f64], dt: f64) -> usize {
    let mut cum = 0.0;
    for (j, &g) in row.iter().enumerate() {
        if j == i {
            continue;
        }
        cum += g * dt;
        if u < cum {
            return j;
        }
    }
    i
}

/// Observation drawn from the emission row of the true mode `i`.
pub fn sample_observation<R: Rng + ?Sized>(rng: &mut R, i: usize, alpha_row: &[f64]) -> Result<usize, SimError> {
    if let Some((j, v)) = alpha_row.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(SimError::NotStochastic(format!("mode {i}: entry {j} = {v}")));
    }
    let sum: f64 = alpha_row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(SimError::NotStochastic(format!("mode {i}: row sums to {sum}")));
    }
    Ok(categorical(rng.gen::<f64>(), alpha_row))
}

fn categorical(u: f64, p: &[f64]) -> usize {
    let mut cum = 0.0;
    for (j, &w) in p.iter().enumerate() {
        cum += w;
        if u < cum {
            return j;
        }
    }
    // u landed in the rounding gap above the last cumulative sum
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// `u_k = G_{k,î}^{m₁,m₂} x_k`. System 0 addresses the integrated gains of
/// a centralized bank, with `î` the joint observation and `x` stacked.
pub fn control_input(
    bank: &ControllerBank,
    k: usize,
    obs: usize,
    m1: usize,
    m2: usize,
    x: &[f64],
) -> Result<Vec<f64>, SimError> {
    let g = bank.gain(GainKey::new(k, obs, m1, m2))?;
    if g.cols() != x.len() {
        return Err(SimError::InvalidConfig(format!("gain has {} columns, state has {} entries", g.cols(), x.len())));
    }
    Ok(g.mul_vec(x))
}

/// Closed-loop data for every (joint mode, joint observation, cell).
struct Plant {
    n1: usize,
    nu1: usize,
    nw: usize,
    modes2: usize,
    obs_count: usize,
    cells2: usize,
    /// Indexed by [`Plant::slot`].
    closed: Vec<Matrix>,
    gains: Vec<Matrix>,
    d: Vec<Matrix>,
}

impl Plant {
    fn new(model: &InterdependentModel, bank: &ControllerBank) -> Result<Self, SimError> {
        let integ = compose_integrated(model)?;
        let table = bank.integrated_table(&integ)?;
        let (nm, nc) = (integ.num_modes(), integ.num_cells());
        let mut closed = Vec::with_capacity(nm * nm * nc);
        let mut gains = Vec::with_capacity(nm * nm * nc);
        for i in 0..nm {
            let mode = integ.system.mode(i);
            for obs in 0..nm {
                for row in table.iter() {
                    let g = &row[obs];
                    if g.shape() != (mode.b.cols(), mode.a.rows()) {
                        return Err(SimError::InvalidConfig(format!(
                            "gain is {}x{}, expected {}x{}",
                            g.rows(),
                            g.cols(),
                            mode.b.cols(),
                            mode.a.rows()
                        )));
                    }
                    closed.push(&mode.a + &(&mode.b * g));
                    gains.push(g.clone());
                }
            }
        }
        Ok(Self {
            n1: integ.dims.state.0,
            nu1: integ.dims.input.0,
            nw: integ.system.disturbance_dim(),
            modes2: integ.modes.second,
            obs_count: nm,
            cells2: integ.cells.second,
            closed,
            gains,
            d: integ.system.modes().iter().map(|m| m.d.clone()).collect(),
        })
    }

    fn slot(&self, modes: (usize, usize), obs: (usize, usize), regions: (usize, usize)) -> (usize, usize) {
        let mode = modes.0 * self.modes2 + modes.1;
        let o = obs.0 * self.modes2 + obs.1;
        let cell = regions.0 * self.cells2 + regions.1;
        let cells = self.closed.len() / (self.obs_count * self.obs_count);
        (mode, (mode * self.obs_count + o) * cells + cell)
    }
}

fn mat_vec_into(m: &Matrix, x: &[f64], out: &mut [f64]) {
    let c = m.cols();
    for (o, row) in out.iter_mut().zip(m.as_slice().chunks_exact(c)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// One RK4 step of `ẋ = M x + f` with constant `M` and `f`.
fn rk4(m: &Matrix, f: &[f64], x: &mut [f64], dt: f64, scratch: &mut [Vec<f64>; 5]) {
    let n = x.len();
    let [k1, k2, k3, k4, tmp] = scratch;
    let rhs = |y: &[f64], out: &mut [f64]| {
        mat_vec_into(m, y, out);
        for (o, fi) in out.iter_mut().zip(f) {
            *o += fi;
        }
    };
    rhs(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    rhs(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    rhs(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    rhs(tmp, k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn validate_initial(model: &InterdependentModel, init: &InitialState) -> Result<(), SimError> {
    if init.x1.len() != model.sys1.state_dim() || init.x2.len() != model.sys2.state_dim() {
        return Err(SimError::InvalidConfig(format!(
            "initial states have lengths ({}, {}), expected ({}, {})",
            init.x1.len(),
            init.x2.len(),
            model.sys1.state_dim(),
            model.sys2.state_dim()
        )));
    }
    if init.mode1 >= model.sys1.num_modes() || init.mode2 >= model.sys2.num_modes() {
        return Err(SimError::InvalidConfig(format!("initial modes ({}, {}) out of range", init.mode1, init.mode2)));
    }
    if init.x1.iter().chain(&init.x2).any(|v| !v.is_finite()) {
        return Err(SimError::InvalidConfig("initial state is not finite".into()));
    }
    Ok(())
}

/// Runs one closed-loop simulation with `rng`, handing every grid point
/// to `observe`.
pub fn simulate_with<R: Rng>(
    model: &InterdependentModel,
    bank: &ControllerBank,
    config: &SimConfig,
    init: &InitialState,
    rng: &mut R,
    mut observe: impl FnMut(&Sample<'_>),
) -> Result<(), SimError> {
    model.ensure_valid()?;
    config.validate(model)?;
    validate_initial(model, init)?;
    let plant = Plant::new(model, bank)?;
    run(model, &plant, config, init, rng, 0, &mut observe)
}

fn run<R: Rng>(
    model: &InterdependentModel,
    plant: &Plant,
    config: &SimConfig,
    init: &InitialState,
    rng: &mut R,
    run_index: usize,
    observe: &mut dyn FnMut(&Sample<'_>),
) -> Result<(), SimError> {
    let dt = config.dt;
    let steps = config.steps();
    let period_steps = match config.policy {
        ObservationPolicy::OnChange => None,
        ObservationPolicy::Periodic(p) => Some(((p / dt).round() as usize).max(1)),
    };
    let n1 = plant.n1;
    let mut x: Vec<f64> = init.x1.iter().chain(&init.x2).copied().collect();
    let n = x.len();
    let mut u = vec![0.0; plant.gains[0].rows()];
    let mut w = vec![0.0; plant.nw];
    let mut f = vec![0.0; n];
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

    let mut modes = (init.mode1, init.mode2);
    let mut obs = (0, 0);
    let mut last: Option<((usize, usize), (usize, usize))> = None;

    for step in 0..=steps {
        let t = step as f64 * dt;
        let regions = (model.part1.region_index(&x[..n1]), model.part2.region_index(&x[n1..]));
        let (alpha1, alpha2) = (model.obs1.alpha(regions.0), model.obs2.alpha(regions.1));
        let (refresh1, refresh2) = match (period_steps, last) {
            (_, None) => (true, true),
            (Some(p), _) => (step % p == 0, step % p == 0),
            (None, Some((prev_modes, prev_regions))) => {
                let moved = prev_regions != regions;
                (moved || prev_modes.0 != modes.0, moved || prev_modes.1 != modes.1)
            }
        };
        if refresh1 {
            obs.0 = categorical(rng.gen::<f64>(), alpha1.row(modes.0));
        }
        if refresh2 {
            obs.1 = categorical(rng.gen::<f64>(), alpha2.row(modes.1));
        }
        last = Some((modes, regions));

        let (mode, slot) = plant.slot(modes, obs, regions);
        mat_vec_into(&plant.gains[slot], &x, &mut u);
        observe(&Sample {
            step,
            t,
            x1: &x[..n1],
            x2: &x[n1..],
            modes,
            observations: obs,
            regions,
            u1: &u[..plant.nu1],
            u2: &u[plant.nu1..],
        });
        if step == steps {
            break;
        }

        config.disturbance.eval(t, &mut w);
        if plant.nw > 0 {
            mat_vec_into(&plant.d[mode], &w, &mut f);
        }
        rk4(&plant.closed[slot], &f, &mut x, dt, &mut scratch);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged { run: run_index, t: t + dt });
        }

        let row1 = model.rates1.get(regions.1).row(modes.0);
        let row2 = model.rates2.get(regions.0).row(modes.1);
        modes = (jump(rng.gen::<f64>(), modes.0, row1, dt), jump(rng.gen::<f64>(), modes.1, row2, dt));
    }
    Ok(())
}

/// Generator of run `r` under master seed `seed`; run 0 is the one
/// [`simulate`] uses.
pub fn run_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Records every grid point of one run seeded by `config.seed`.
pub fn simulate(
    model: &InterdependentModel,
    bank: &ControllerBank,
    config: &SimConfig,
    init: &InitialState,
) -> Result<Trace, SimError> {
    let mut trace = Trace::default();
    let mut rng = run_rng(config.seed, 0);
    simulate_with(model, bank, config, init, &mut rng, |s| trace.push(s))?;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub horizon: f64,
    pub mean: f64,
    pub stderr: f64,
    /// `∫₀^T |x|² dt` per run (trapezoidal).
    pub functional_per_run: Vec<f64>,
    /// Same integral truncated at the grid point nearest `T/2`.
    pub half_horizon_per_run: Vec<f64>,
    pub half_horizon_mean: f64,
    pub terminal_norms: Vec<f64>,
    /// `|mean(T) − mean(T/2)| / mean(T)`, 0 when both vanish.
    pub saturation: f64,
}

impl MonteCarloReport {
    pub fn median_terminal_norm(&self) -> f64 {
        median(&self.terminal_norms)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Pairwise summation, so that the result depends only on the order of
/// `v` and not on how runs were scheduled.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

struct RunSummary {
    functional: f64,
    half: f64,
    terminal: f64,
}

/// `runs` independent simulations with seeds derived from
/// `(config.seed, run index)`, executed in parallel.
pub fn estimate_stability(
    model: &InterdependentModel,
    bank: &ControllerBank,
    config: &SimConfig,
    init: &InitialState,
    runs: usize,
) -> Result<MonteCarloReport, SimError> {
    if runs == 0 {
        return Err(SimError::InvalidConfig("need at least one run".into()));
    }
    model.ensure_valid()?;
    config.validate(model)?;
    validate_initial(model, init)?;
    let plant = Plant::new(model, bank)?;
    let half_step = config.steps() / 2;
    let dt = config.dt;

    let summaries: Vec<RunSummary> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = run_rng(config.seed, r);
            let mut integral = 0.0;
            let mut half = 0.0;
            let mut prev: Option<f64> = None;
            let mut terminal = 0.0;
            run(model, &plant, config, init, &mut rng, r, &mut |s| {
                let e = s.norm_sq();
                if let Some(p) = prev {
                    integral += 0.5 * dt * (p + e);
                }
                if s.step == half_step {
                    half = integral;
                }
                prev = Some(e);
                terminal = e.sqrt();
            })?;
            Ok(RunSummary { functional: integral, half, terminal })
        })
        .collect::<Result<_, SimError>>()?;

    let functional_per_run: Vec<f64> = summaries.iter().map(|s| s.functional).collect();
    let half_horizon_per_run: Vec<f64> = summaries.iter().map(|s| s.half).collect();
    let terminal_norms: Vec<f64> = summaries.iter().map(|s| s.terminal).collect();
    let nf = runs as f64;
    let mean = pairwise_sum(&functional_per_run) / nf;
    let half_horizon_mean = pairwise_sum(&half_horizon_per_run) / nf;
    let stderr = if runs > 1 {
        let dev: Vec<f64> = functional_per_run.iter().map(|v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&dev) / (nf - 1.0) / nf).sqrt()
    } else {
        0.0
    };
    let saturation = if mean > 0.0 { (mean - half_horizon_mean).abs() / mean } else { 0.0 };
    Ok(MonteCarloReport {
        runs,
        horizon: config.steps() as f64 * dt,
        mean,
        stderr,
        functional_per_run,
        half_horizon_per_run,
        half_horizon_mean,
        terminal_norms,
        saturation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{JumpLinearSystem, Mode, ObservationModel, RateFamily, RegionPartition};

    fn scalar(a: f64) -> JumpLinearSystem {
        JumpLinearSystem::new(vec![Mode::new(
            Matrix::from_rows(&[[a]]).unwrap(),
            Matrix::from_rows(&[[1.0]]).unwrap(),
            Matrix::from_rows(&[[1.0]]).unwrap(),
        )])
        .unwrap()
    }

    fn scalar_model(a1: f64, a2: f64) -> InterdependentModel {
        InterdependentModel {
            sys1: scalar(a1),
            sys2: scalar(a2),
            part1: RegionPartition::single(),
            part2: RegionPartition::single(),
            rates1: RateFamily::new(vec![Matrix::zeros(1, 1)]),
            rates2: RateFamily::new(vec![Matrix::zeros(1, 1)]),
            obs1: ObservationModel::perfect(1, 1),
            obs2: ObservationModel::perfect(1, 1),
        }
    }

    #[test]
    fn zero_row_never_jumps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(step_mode(&mut rng, 1, &[0.0, 0.0, 0.0], 0.01).unwrap(), 1);
        }
    }

    #[test]
    fn jump_uses_cumulative_thresholds() {
        let row = [-0.9, 0.6, 0.3];
        assert_eq!(jump(0.0, 0, &row, 0.1), 1);
        assert_eq!(jump(0.0599, 0, &row, 0.1), 1);
        assert_eq!(jump(0.0601, 0, &row, 0.1), 2);
        assert_eq!(jump(0.0901, 0, &row, 0.1), 0);
    }

    #[test]
    fn bad_rows_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(step_mode(&mut rng, 0, &[-0.4, -0.4], 0.1), Err(SimError::InvalidGenerator(_))));
        assert!(matches!(step_mode(&mut rng, 0, &[-0.4, 0.5], 0.1), Err(SimError::InvalidGenerator(_))));
        assert!(matches!(step_mode(&mut rng, 0, &[-20.0, 20.0], 0.1), Err(SimError::InvalidGenerator(_))));
        assert!(matches!(sample_observation(&mut rng, 0, &[0.5, 0.6]), Err(SimError::NotStochastic(_))));
        assert!(matches!(sample_observation(&mut rng, 0, &[1.5, -0.5]), Err(SimError::NotStochastic(_))));
    }

    #[test]
    fn exact_observation_returns_true_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_observation(&mut rng, 1, &[0.0, 1.0, 0.0]).unwrap(), 1);
        }
    }

    #[test]
    fn categorical_rounding_gap_picks_last_positive() {
        assert_eq!(categorical(0.999_999_999_999_999_9, &[0.3, 0.7, 0.0]), 1);
    }

    #[test]
    fn control_input_examples() {
        let mut bank = ControllerBank::new(crate::synthesis::Scheme::Distributed);
        bank.gains.insert(GainKey::new(1, 0, 0, 0), Matrix::from_rows(&[[-2.0, 1.0]]).unwrap());
        bank.gains.insert(GainKey::new(1, 1, 0, 0), Matrix::zeros(1, 2));
        assert_eq!(control_input(&bank, 1, 0, 0, 0, &[3.0, 4.0]).unwrap(), vec![-2.0]);
        assert_eq!(control_input(&bank, 1, 1, 0, 0, &[3.0, 4.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            control_input(&bank, 2, 0, 0, 0, &[1.0]),
            Err(SimError::Synthesis(SynthesisError::MissingGain(_)))
        ));
    }

    #[test]
    fn step_bound_is_enforced() {
        let model = fixtures::example_model();
        // largest exit rate in the example is 1.2
        let bound = SimConfig::max_dt(&model);
        assert!((bound - 0.1 / 1.2).abs() < 1e-15);
        let cfg = SimConfig::new(0.1, 1.0, 0);
        assert!(matches!(cfg.validate(&model), Err(SimError::StepTooLarge { .. })));
        assert!(SimConfig::new(0.05, 1.0, 0).validate(&model).is_ok());
    }

    #[test]
    fn frozen_dynamics_keep_the_state() {
        let mut model = scalar_model(0.0, 0.0);
        for sys in [&mut model.sys1, &mut model.sys2] {
            *sys = JumpLinearSystem::new(vec![Mode::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1), Matrix::zeros(1, 1))])
                .unwrap();
        }
        let bank = ControllerBank::zero_distributed(&model);
        let init = InitialState::new(vec![1.5], vec![-2.0]);
        let trace = simulate(&model, &bank, &SimConfig::new(0.01, 1.0, 0), &init).unwrap();
        assert_eq!(trace.len(), 101);
        assert!(trace.x1.iter().all(|x| x[0] == 1.5));
        assert!(trace.x2.iter().all(|x| x[0] == -2.0));
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let model = scalar_model(-1.0, -1.0);
        let bank = ControllerBank::zero_distributed(&model);
        let init = InitialState::new(vec![2.0], vec![0.0]);
        let trace = simulate(&model, &bank, &SimConfig::new(1e-3, 5.0, 0), &init).unwrap();
        let got = trace.x1.last().unwrap()[0];
        let expected = 2.0 * (-5.0_f64).exp();
        assert!((got - expected).abs() <= 1e-6 * expected);
        assert_eq!(*trace.t.last().unwrap(), 5.0);
    }

    #[test]
    fn zero_horizon_records_only_the_start() {
        let model = scalar_model(-1.0, -1.0);
        let bank = ControllerBank::zero_distributed(&model);
        let trace = simulate(&model, &bank, &SimConfig::new(1e-3, 0.0, 0), &InitialState::new(vec![1.0], vec![1.0])).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.t, vec![0.0]);
    }

    #[test]
    fn disturbance_drives_the_state() {
        let model = scalar_model(-1.0, -1.0);
        let bank = ControllerBank::zero_distributed(&model);
        let mut cfg = SimConfig::new(1e-3, 2.0, 0);
        cfg.disturbance = DisturbanceSpec::DecayingSine { amplitude: vec![1.0, 0.0], decay: 0.5, frequency: 3.0 };
        let trace = simulate(&model, &bank, &cfg, &InitialState::new(vec![0.0], vec![0.0])).unwrap();
        assert!(trace.x1.iter().any(|x| x[0].abs() > 1e-3));
        assert!(trace.x2.iter().all(|x| x[0] == 0.0));
        cfg.disturbance = DisturbanceSpec::DecayingSine { amplitude: vec![1.0], decay: 0.5, frequency: 3.0 };
        assert!(matches!(cfg.validate(&model), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn analytic_functional() {
        let model = scalar_model(-1.0, -1.0);
        let bank = ControllerBank::zero_distributed(&model);
        let cfg = SimConfig::new(1e-4, 10.0, 0);
        let report = estimate_stability(&model, &bank, &cfg, &InitialState::new(vec![1.0], vec![0.0]), 1).unwrap();
        assert!((report.mean - 0.5).abs() <= 0.01);
        let zero = estimate_stability(&model, &bank, &cfg, &InitialState::new(vec![0.0], vec![0.0]), 3).unwrap();
        assert_eq!(zero.mean, 0.0);
        assert_eq!(zero.saturation, 0.0);
    }

    #[test]
    fn run_zero_reproduces_simulate() {
        let model = fixtures::example_model();
        let bank = ControllerBank::zero_distributed(&model);
        let (x1, x2) = fixtures::example_initial_state();
        let init = InitialState::new(x1.iter().map(|v| v * 1e-3).collect(), x2.iter().map(|v| v * 1e-3).collect());
        let cfg = SimConfig::new(1e-3, 0.5, 42);
        let trace = simulate(&model, &bank, &cfg, &init).unwrap();
        let report = estimate_stability(&model, &bank, &cfg, &init, 4).unwrap();
        assert_eq!(report.terminal_norms[0].to_bits(), trace.terminal_norm().to_bits());
    }

    #[test]
    fn pairwise_sum_and_median() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
