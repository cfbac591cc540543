use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mjls_core::lmi::{solve_feasibility, LmiSolution, Sense, SolveStatus, DEFAULT_MARGIN, DEFAULT_MAX_ITER};
use mjls_core::model::{compose_integrated, InterdependentModel};
use mjls_core::sim::{
    estimate_stability, simulate, DisturbanceSpec, InitialState, MonteCarloReport, ObservationPolicy, SimConfig,
};
use mjls_core::synthesis::{
    build_centralized, build_distributed, build_fullinfo, certify_gains, check_corollary, recover_gains,
    Certificate, ControllerBank, Scheme, SynthesisError, SynthesisOptions, SynthesisProblem,
};
use serde::Serialize;

use crate::files::{canonical_json, read_gains, read_model, write_atomic, GainsFile, ModelFile};
use crate::trace_csv;

/// Process exit status for each class of outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success = 0,
    InputError = 1,
    Uncertified = 2,
    IterationLimit = 3,
}

impl Outcome {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn from_status(status: SolveStatus) -> Self {
        match status {
            SolveStatus::Feasible => Outcome::Success,
            SolveStatus::Infeasible => Outcome::Uncertified,
            SolveStatus::IterationLimit => Outcome::IterationLimit,
        }
    }
}

/// A failure that maps to exit code 1.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError(pub String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

fn synthesis_input_error(e: SynthesisError) -> InputError {
    match e {
        SynthesisError::MissingGain(k) => InputError(format!("MissingGain: no gain for {k} (indices 0-based)")),
        other => InputError(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mjls", version, about = "Synthesis, certification and simulation of interdependent jump linear systems")]
pub struct Cli {
    /// Margin of every strict matrix inequality.
    #[arg(long, global = true, default_value_t = DEFAULT_MARGIN)]
    pub delta: f64,
    /// Random seed for simulation commands.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a synthesis LMI and write the gain bank.
    Synthesize(SynthesizeArgs),
    /// Check a gain bank against the closed-loop generator condition.
    Certify(CertifyArgs),
    /// Simulate one closed-loop run and write a CSV trace.
    Simulate(SimulateArgs),
    /// Estimate the integrated squared state norm over many runs.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Centralized,
    Fullinfo,
    Distributed,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Distributed)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Required exponential decay rate of the Lyapunov function.
    #[arg(long, default_value_t = 0.0)]
    pub decay: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    pub model: PathBuf,
    pub gains: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub model: PathBuf,
    pub gains: PathBuf,
    /// Initial state of System 1, comma separated; defaults to the model
    /// file's `initial` entry.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x2: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// `on-change` or `periodic:<seconds>`.
    #[arg(long, default_value = "on-change")]
    pub obs_policy: String,
    /// `a1,a2,...:decay:frequency` for `w(t) = a e^{-decay t} sin(frequency t)`.
    #[arg(long)]
    pub disturbance: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 100)]
    pub runs: usize,
}

/// Runs a parsed command, writing the human-readable report to `out`
/// and diagnostics to `err`; returns the exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Synthesize(a) => cmd_synthesize(a, cli.delta, out),
        Command::Certify(a) => cmd_certify(a, cli.delta, out),
        Command::Simulate(a) => cmd_simulate(&a.run, cli.seed, out),
        Command::Montecarlo(a) => cmd_montecarlo(a, cli.seed, out),
    };
    match result {
        Ok(outcome) => outcome.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.0);
            Outcome::InputError.code()
        }
    }
}

/// Largest eigenvalue over the negative-definite blocks.
fn worst_block(problem: &SynthesisProblem, sol: &LmiSolution) -> f64 {
    problem
        .problem
        .constraints()
        .zip(&sol.margins)
        .filter(|((s, _), _)| *s == Sense::Negative)
        .map(|(_, &m)| m)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_delta(delta: f64) -> Result<(), InputError> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(InputError(format!("--delta must be positive, got {delta}")))
    }
}

pub fn cmd_synthesize(a: &SynthesizeArgs, delta: f64, out: &mut dyn Write) -> Result<Outcome, InputError> {
    check_delta(delta)?;
    let (model, _) = read_model(&a.model)?;
    let opts = SynthesisOptions { margin: delta, decay: a.decay, max_iter: a.max_iter };
    let integ = compose_integrated(&model)?;
    let problems = match a.scheme {
        SchemeArg::Distributed => {
            let (p1, p2) = build_distributed(&model, &opts).map_err(synthesis_input_error)?;
            vec![p1, p2]
        }
        SchemeArg::Centralized => vec![build_centralized(&integ, &opts).map_err(synthesis_input_error)?],
        SchemeArg::Fullinfo => vec![build_fullinfo(&integ, &opts).map_err(synthesis_input_error)?],
    };

    let solutions: Vec<LmiSolution> = problems
        .iter()
        .map(|p| solve_feasibility(&p.problem, a.max_iter))
        .collect::<Result<_, _>>()?;
    let mut outcome = Outcome::Success;
    for (p, sol) in problems.iter().zip(&solutions) {
        let name = if p.system == 0 { "integrated system".to_string() } else { format!("system {}", p.system) };
        writeln!(
            out,
            "{name}: {:?} after {} iterations, {} blocks, worst block eigenvalue {:e}",
            sol.status,
            sol.iterations,
            p.problem.negative.len(),
            worst_block(p, sol)
        )?;
        outcome = match (outcome, Outcome::from_status(sol.status)) {
            (Outcome::Uncertified, _) | (_, Outcome::Uncertified) => Outcome::Uncertified,
            (Outcome::IterationLimit, _) | (_, Outcome::IterationLimit) => Outcome::IterationLimit,
            _ => Outcome::Success,
        };
    }
    if outcome != Outcome::Success {
        writeln!(out, "no gains written")?;
        return Ok(outcome);
    }

    let mut bank: Option<ControllerBank> = None;
    for (p, sol) in problems.iter().zip(&solutions) {
        let b = match recover_gains(sol, p) {
            Ok(b) => b,
            Err(e @ SynthesisError::SingularX { .. }) => {
                writeln!(out, "gain recovery failed: {e}; no gains written")?;
                return Ok(Outcome::Uncertified);
            }
            Err(e) => return Err(synthesis_input_error(e)),
        };
        bank = Some(match bank {
            None => b,
            Some(prev) => ControllerBank::combine(&prev, &b),
        });
    }
    let bank = bank.expect("at least one problem");
    let scheme = bank.scheme;
    let expected = ControllerBank::expected_len(scheme, &integ);
    if bank.len() != expected || !bank.all_finite() {
        writeln!(out, "gain bank has {} entries (expected {expected}) or non-finite values", bank.len())?;
        return Ok(Outcome::Uncertified);
    }
    writeln!(out, "{} gains", bank.len())?;

    let cert = certify_bank(&model, &bank, delta)?;
    report_certificate(&cert, &model, out, false)?;
    if !cert.certified {
        writeln!(out, "closed loop not certified; no gains written")?;
        return Ok(uncertified_outcome(&cert));
    }
    write_atomic(&a.out, canonical_json(&GainsFile::from_bank(&bank)).as_bytes())?;
    writeln!(out, "wrote {}", a.out.display())?;
    Ok(Outcome::Success)
}

fn certify_bank(model: &InterdependentModel, bank: &ControllerBank, delta: f64) -> Result<Certificate, InputError> {
    let r = match bank.scheme {
        Scheme::Distributed => check_corollary(model, bank, bank, delta),
        Scheme::Centralized | Scheme::FullInformation => certify_gains(&compose_integrated(model)?, bank, delta),
    };
    r.map_err(synthesis_input_error)
}

fn uncertified_outcome(cert: &Certificate) -> Outcome {
    if cert.status == SolveStatus::IterationLimit {
        Outcome::IterationLimit
    } else {
        Outcome::Uncertified
    }
}

fn report_certificate(
    cert: &Certificate,
    model: &InterdependentModel,
    out: &mut dyn Write,
    every_entry: bool,
) -> std::io::Result<()> {
    let (n2, c2) = (model.sys2.num_modes(), model.part2.num_regions());
    if every_entry {
        for (i, row) in cert.psi_max.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                writeln!(
                    out,
                    "mode ({},{}) cell ({},{}): max eig Psi = {:e}",
                    i / n2 + 1,
                    i % n2 + 1,
                    c / c2 + 1,
                    c % c2 + 1,
                    v
                )?;
            }
        }
    }
    writeln!(
        out,
        "certificate ({:?}, {:?}): worst max eig Psi = {:e}, margin {:e}, min eig P = {:e}, certified = {}",
        cert.source,
        cert.status,
        cert.worst_psi(),
        cert.margin,
        cert.min_p_eigenvalue(),
        cert.certified
    )
}

pub fn cmd_certify(a: &CertifyArgs, delta: f64, out: &mut dyn Write) -> Result<Outcome, InputError> {
    check_delta(delta)?;
    let (model, _) = read_model(&a.model)?;
    let bank = read_gains(&a.gains, &model)?;
    let cert = certify_bank(&model, &bank, delta)?;
    report_certificate(&cert, &model, out, true)?;
    Ok(if cert.certified { Outcome::Success } else { uncertified_outcome(&cert) })
}

fn parse_policy(s: &str) -> Result<ObservationPolicy, InputError> {
    if s == "on-change" {
        return Ok(ObservationPolicy::OnChange);
    }
    if let Some(p) = s.strip_prefix("periodic:") {
        let p: f64 = p.parse().map_err(|_| InputError(format!("--obs-policy: bad period `{p}`")))?;
        return Ok(ObservationPolicy::Periodic(p));
    }
    Err(InputError(format!("--obs-policy must be `on-change` or `periodic:<seconds>`, got `{s}`")))
}

fn parse_disturbance(s: &str) -> Result<DisturbanceSpec, InputError> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || InputError(format!("--disturbance must look like `a1,a2:decay:frequency`, got `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let amplitude = parts[0].split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
    let decay = parts[1].trim().parse().map_err(|_| bad())?;
    let frequency = parts[2].trim().parse().map_err(|_| bad())?;
    Ok(DisturbanceSpec::DecayingSine { amplitude, decay, frequency })
}

struct Prepared {
    model: InterdependentModel,
    bank: ControllerBank,
    config: SimConfig,
    init: InitialState,
}

fn prepare(a: &RunArgs, seed: u64) -> Result<Prepared, InputError> {
    let (model, file): (InterdependentModel, ModelFile) = read_model(&a.model)?;
    let bank = read_gains(&a.gains, &model)?;
    let initial = file.initial.as_ref();
    let x1 = a.x1.clone().or_else(|| initial.map(|i| i.x1.clone()));
    let x2 = a.x2.clone().or_else(|| initial.map(|i| i.x2.clone()));
    let (Some(x1), Some(x2)) = (x1, x2) else {
        return Err(InputError("initial state missing: pass --x1 and --x2 or add `initial` to the model file".into()));
    };
    let mut config = SimConfig::new(a.dt, a.horizon, seed);
    config.policy = parse_policy(&a.obs_policy)?;
    if let Some(d) = &a.disturbance {
        config.disturbance = parse_disturbance(d)?;
    }
    config.validate(&model)?;
    Ok(Prepared { model, bank, config, init: InitialState::new(x1, x2) })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cmd_simulate(a: &RunArgs, seed: u64, out: &mut dyn Write) -> Result<Outcome, InputError> {
    let p = prepare(a, seed)?;
    let trace = simulate(&p.model, &p.bank, &p.config, &p.init).map_err(|e| InputError(e.to_string()))?;
    let csv = trace_csv::render(
        &trace,
        p.model.sys1.state_dim(),
        p.model.sys2.state_dim(),
        p.model.sys1.input_dim(),
        p.model.sys2.input_dim(),
    );
    write_atomic(&a.out, csv.as_bytes())?;
    let last = trace.len() - 1;
    writeln!(out, "{} rows written to {}", trace.len(), a.out.display())?;
    writeln!(
        out,
        "terminal norms at t = {}: |x1| = {:e}, |x2| = {:e}, |x| = {:e} (initial |x| = {:e})",
        trace.t[last],
        norm(&trace.x1[last]),
        norm(&trace.x2[last]),
        trace.terminal_norm(),
        norm(&[norm(&p.init.x1), norm(&p.init.x2)])
    )?;
    Ok(Outcome::Success)
}

/// The JSON form of a Monte Carlo report.
#[derive(Debug, Serialize)]
pub struct ReportFile<'a> {
    pub runs: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub mean: f64,
    pub stderr: f64,
    pub half_horizon_mean: f64,
    pub saturation: f64,
    pub median_terminal_norm: f64,
    pub functional_per_run: &'a [f64],
    pub terminal_norms: &'a [f64],
}

impl<'a> ReportFile<'a> {
    pub fn new(r: &'a MonteCarloReport, config: &SimConfig) -> Self {
        Self {
            runs: r.runs,
            horizon: r.horizon,
            dt: config.dt,
            seed: config.seed,
            mean: r.mean,
            stderr: r.stderr,
            half_horizon_mean: r.half_horizon_mean,
            saturation: r.saturation,
            median_terminal_norm: r.median_terminal_norm(),
            functional_per_run: &r.functional_per_run,
            terminal_norms: &r.terminal_norms,
        }
    }
}

pub fn cmd_montecarlo(a: &MonteCarloArgs, seed: u64, out: &mut dyn Write) -> Result<Outcome, InputError> {
    if a.runs == 0 {
        return Err(InputError("--runs must be at least 1".into()));
    }
    let p = prepare(&a.run, seed)?;
    let report =
        estimate_stability(&p.model, &p.bank, &p.config, &p.init, a.runs).map_err(|e| InputError(e.to_string()))?;
    write_atomic(&a.run.out, canonical_json(&ReportFile::new(&report, &p.config)).as_bytes())?;
    writeln!(
        out,
        "{} runs, horizon {}: E[int |x|^2 dt] = {:e} +/- {:e} (half horizon {:e}), saturation {:e}, median |x(T)| = {:e}",
        report.runs,
        report.horizon,
        report.mean,
        report.stderr,
        report.half_horizon_mean,
        report.saturation,
        report.median_terminal_norm()
    )?;
    writeln!(out, "report written to {}", a.run.out.display())?;
    Ok(Outcome::Success)
}
