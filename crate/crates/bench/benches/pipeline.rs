use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mjls_core::fixtures;
use mjls_core::lmi::solve_feasibility;
use mjls_core::model::compose_integrated;
use mjls_core::sim::{estimate_stability, simulate, InitialState, SimConfig};
use mjls_core::synthesis::{build_distributed, certify_gains, recover_gains, ControllerBank, SynthesisOptions};

/// Distributed bank with System 2 gains from synthesis and System 1 gains
/// set to zero, so every benchmark has a complete bank to work with.
fn example_bank() -> ControllerBank {
    let model = fixtures::example_model();
    let opts = SynthesisOptions::default();
    let (_, p2) = build_distributed(&model, &opts).unwrap();
    let sol = solve_feasibility(&p2.problem, opts.max_iter).unwrap();
    let sys2 = recover_gains(&sol, &p2).unwrap();
    let mut bank = ControllerBank::zero_distributed(&model);
    bank.gains.extend(sys2.gains);
    bank
}

fn synthesis(c: &mut Criterion) {
    let model = fixtures::example_model();
    let opts = SynthesisOptions::default();
    let (_, p2) = build_distributed(&model, &opts).unwrap();
    c.bench_function("build distributed LMIs (example)", |b| b.iter(|| build_distributed(black_box(&model), &opts)));
    c.bench_function("solve System 2 LMI (example)", |b| {
        b.iter(|| solve_feasibility(black_box(&p2.problem), opts.max_iter).unwrap())
    });
}

fn certification(c: &mut Criterion) {
    let integ = compose_integrated(&fixtures::example_model()).unwrap();
    let bank = example_bank();
    c.bench_function("certify gains (example)", |b| b.iter(|| certify_gains(black_box(&integ), &bank, 1e-6).unwrap()));
}

fn simulation(c: &mut Criterion) {
    let model = fixtures::example_model();
    let bank = example_bank();
    let (x1, x2) = fixtures::example_initial_state();
    let init = InitialState::new(x1, x2);
    let cfg = SimConfig::new(1e-3, 10.0, 0);
    c.bench_function("simulate 10 s at dt 1e-3 (example)", |b| {
        b.iter(|| simulate(black_box(&model), &bank, &cfg, &init).unwrap())
    });
    let short = SimConfig::new(1e-3, 1.0, 0);
    let mut g = c.benchmark_group("monte carlo");
    g.sample_size(10);
    g.bench_function("32 runs of 1 s (example)", |b| {
        b.iter(|| estimate_stability(black_box(&model), &bank, &short, &init, 32).unwrap())
    });
    g.finish();
}

criterion_group!(benches, synthesis, certification, simulation);
criterion_main!(benches);
