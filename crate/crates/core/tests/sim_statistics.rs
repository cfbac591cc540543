use mjls_core::fixtures;
use mjls_core::linalg::Matrix;
use mjls_core::model::{
    stationary_distribution, InterdependentModel, JumpLinearSystem, Mode, ObservationModel, RateFamily,
    RegionPartition,
};
use mjls_core::sim::{
    estimate_stability, run_rng, sample_observation, simulate, simulate_with, step_mode, InitialState,
    ObservationPolicy, SimConfig,
};
use mjls_core::synthesis::{check_corollary, synthesize_distributed, ControllerBank, SynthesisOptions};

fn m<R: AsRef<[f64]>>(rows: &[R]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn jump_frequency_matches_rate() {
    let mut rng = run_rng(11, 0);
    let n = 1_000_000;
    let jumps = (0..n).filter(|_| step_mode(&mut rng, 0, &[-0.6, 0.6], 0.01).unwrap() == 1).count();
    let freq = jumps as f64 / n as f64;
    assert!((freq - 0.006).abs() <= 3e-4, "{freq}");
}

#[test]
fn example_rates_give_expected_exit_probability() {
    let model = fixtures::example_model();
    let row = model.rates1.get(0).row(1).to_vec();
    let mut rng = run_rng(12, 0);
    let n = 1_000_000;
    let jumps = (0..n).filter(|_| step_mode(&mut rng, 1, &row, 1e-3).unwrap() == 0).count();
    let freq = jumps as f64 / n as f64;
    assert!((freq - 4e-4).abs() <= 3.0 * binomial_sigma(4e-4, n), "{freq}");
}

#[test]
fn observation_frequencies_match_rows() {
    let mut rng = run_rng(13, 0);
    let n = 1_000_000;
    let hits = (0..n).filter(|_| sample_observation(&mut rng, 0, &[0.9, 0.1]).unwrap() == 0).count();
    assert!((hits as f64 / n as f64 - 0.9).abs() <= 1e-3);
    let hits = (0..n).filter(|_| sample_observation(&mut rng, 0, &[0.5, 0.5]).unwrap() == 0).count();
    assert!((hits as f64 / n as f64 - 0.5).abs() <= 1e-3);
}

fn scalar_modes(a: &[f64]) -> JumpLinearSystem {
    JumpLinearSystem::new(a.iter().map(|&v| Mode::new(m(&[[v]]), m(&[[1.0]]), Matrix::zeros(1, 1))).collect()).unwrap()
}

/// System 1 switches between two modes with the given generator; System
/// 2 is a single scalar mode. One region everywhere.
fn pinned(a1: &[f64], gamma: Matrix, alpha: Matrix) -> InterdependentModel {
    InterdependentModel {
        sys1: scalar_modes(a1),
        sys2: scalar_modes(&[-1.0]),
        part1: RegionPartition::single(),
        part2: RegionPartition::single(),
        rates1: RateFamily::new(vec![gamma]),
        rates2: RateFamily::new(vec![Matrix::zeros(1, 1)]),
        obs1: ObservationModel::new(vec![alpha]).unwrap(),
        obs2: ObservationModel::perfect(1, 1),
    }
}

#[test]
fn mode_occupancy_matches_stationary_distribution() {
    let gamma = m(&[[-0.6, 0.6], [0.4, -0.4]]);
    let pi = stationary_distribution(&gamma).unwrap();
    let model = pinned(&[0.0, 0.0], gamma, Matrix::identity(2));
    let bank = ControllerBank::zero_distributed(&model);
    let cfg = SimConfig::new(1e-3, 2_000.0, 5);
    // batch means over 100 batches of 20 time units each
    let batch = cfg.steps() / 100;
    let mut in_first = vec![0usize; 100];
    let mut rng = run_rng(cfg.seed, 0);
    simulate_with(&model, &bank, &cfg, &InitialState::new(vec![0.0], vec![0.0]), &mut rng, |s| {
        if s.step < batch * 100 && s.modes.0 == 0 {
            in_first[s.step / batch] += 1;
        }
    })
    .unwrap();
    let means: Vec<f64> = in_first.iter().map(|&c| c as f64 / batch as f64).collect();
    let avg = means.iter().sum::<f64>() / 100.0;
    let var = means.iter().map(|v| (v - avg) * (v - avg)).sum::<f64>() / 99.0;
    let se = (var / 100.0).sqrt();
    assert!((avg - pi[0]).abs() <= 3.0 * se, "occupancy {avg} vs {} (se {se})", pi[0]);
}

#[test]
fn conditional_observation_law() {
    let alpha = m(&[[0.9, 0.1], [0.3, 0.7]]);
    let model = pinned(&[0.0, 0.0], m(&[[-1.0, 1.0], [1.0, -1.0]]), alpha.clone());
    let bank = ControllerBank::zero_distributed(&model);
    let mut cfg = SimConfig::new(1e-3, 300.0, 9);
    cfg.policy = ObservationPolicy::Periodic(cfg.dt);
    let mut counts = [[0usize; 2]; 2];
    let mut rng = run_rng(cfg.seed, 0);
    simulate_with(&model, &bank, &cfg, &InitialState::new(vec![0.0], vec![0.0]), &mut rng, |s| {
        counts[s.modes.0][s.observations.0] += 1;
    })
    .unwrap();
    for i in 0..2 {
        let n = counts[i][0] + counts[i][1];
        assert!(n >= 100_000);
        let freq = counts[i][0] as f64 / n as f64;
        assert!((freq - alpha[(i, 0)]).abs() <= 3.0 * binomial_sigma(alpha[(i, 0)], n), "mode {i}: {freq}");
    }
}

#[test]
fn on_change_holds_observations_between_events() {
    let model = pinned(&[0.0, 0.0], m(&[[-1.0, 1.0], [1.0, -1.0]]), m(&[[0.5, 0.5], [0.5, 0.5]]));
    let bank = ControllerBank::zero_distributed(&model);
    let trace = simulate(&model, &bank, &SimConfig::new(1e-3, 50.0, 3), &InitialState::new(vec![0.0], vec![0.0])).unwrap();
    for k in 1..trace.len() {
        if trace.mode1[k] == trace.mode1[k - 1] {
            assert_eq!(trace.obs1[k], trace.obs1[k - 1]);
        }
    }
    assert!(trace.mode1.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn traces_are_bit_identical_for_a_seed() {
    let model = fixtures::example_model();
    let bank = ControllerBank::zero_distributed(&model);
    let (x1, x2) = fixtures::example_initial_state();
    let init = InitialState::new(x1.iter().map(|v| v * 1e-4).collect(), x2.iter().map(|v| v * 1e-4).collect());
    let cfg = SimConfig::new(1e-3, 1.0, 77);
    let a = simulate(&model, &bank, &cfg, &init).unwrap();
    let b = simulate(&model, &bank, &cfg, &init).unwrap();
    let bits = |t: &mjls_core::sim::Trace| -> Vec<u64> {
        t.x1.iter().chain(&t.x2).chain(&t.u1).chain(&t.u2).flatten().map(|v| v.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);
    let other = simulate(&model, &bank, &SimConfig { seed: 78, ..cfg }, &init).unwrap();
    assert_eq!(other.len(), a.len());
}

#[test]
fn monte_carlo_is_reproducible() {
    let model = pinned(&[-0.5, -1.0], m(&[[-1.0, 1.0], [1.0, -1.0]]), m(&[[0.8, 0.2], [0.2, 0.8]]));
    let bank = ControllerBank::zero_distributed(&model);
    let cfg = SimConfig::new(1e-3, 2.0, 4);
    let init = InitialState::new(vec![1.0], vec![1.0]);
    let a = estimate_stability(&model, &bank, &cfg, &init, 16).unwrap();
    let b = estimate_stability(&model, &bank, &cfg, &init, 16).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.functional_per_run.len(), 16);
    assert!(a.functional_per_run.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn certified_bank_decays_across_doubling_horizons() {
    let model = pinned(&[1.0, 0.5], m(&[[-1.0, 1.0], [2.0, -2.0]]), m(&[[0.9, 0.1], [0.1, 0.9]]));
    let opts = SynthesisOptions::default();
    let [(b1, _), (b2, _)] = synthesize_distributed(&model, &opts).unwrap();
    assert!(check_corollary(&model, &b1, &b2, opts.margin).unwrap().certified);
    let bank = ControllerBank::combine(&b1, &b2);
    let init = InitialState::new(vec![3.0], vec![-2.0]);
    let mut last = f64::INFINITY;
    for horizon in [0.5, 1.0, 2.0, 4.0] {
        let r = estimate_stability(&model, &bank, &SimConfig::new(1e-3, horizon, 21), &init, 32).unwrap();
        let mean_norm = r.terminal_norms.iter().sum::<f64>() / r.runs as f64;
        assert!(mean_norm < last, "horizon {horizon}: {mean_norm} !< {last}");
        assert!(r.mean.is_finite());
        last = mean_norm;
    }
}
