use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pdflow::{
    auto_step, compute_rho, generate_problem, reference_solve, GeneratorSpec, Solver, SolverConfig,
};
use pdflow_cli::output::trajectory_csv;

fn example2_instance() -> (pdflow::ProblemSpec, pdflow::LinearConstraints) {
    generate_problem(&GeneratorSpec::random_reg_lsq(30, 50, 1.0, 7)).unwrap()
}

fn bench_setup(c: &mut Criterion) {
    let (p, lc) = example2_instance();
    c.bench_function("compute_rho 30x50", |b| b.iter(|| compute_rho(black_box(&p), black_box(&lc)).unwrap()));
    c.bench_function("reference_solve 30x50", |b| b.iter(|| reference_solve(black_box(&p), black_box(&lc)).unwrap()));
    let (p, lc) = generate_problem(&GeneratorSpec::random_qp(5, 10, 20.0, 42)).unwrap();
    c.bench_function("reference_solve 5x10", |b| b.iter(|| reference_solve(black_box(&p), black_box(&lc)).unwrap()));
}

fn bench_integration(c: &mut Criterion) {
    let mut group = c.benchmark_group("integrate 10k steps");
    group.sample_size(10);
    for (name, (p, lc)) in [
        ("qp 5x10", generate_problem(&GeneratorSpec::random_qp(5, 10, 20.0, 42)).unwrap()),
        ("lsq 30x50", example2_instance()),
    ] {
        for cfg in [SolverConfig::euclidean(), SolverConfig::natural()] {
            let step = auto_step(&p, &lc, &cfg, 0.9).unwrap();
            let cfg = SolverConfig { step, tol: 1e-300, max_iter: 10_000, stride: 10_000, ..cfg };
            let solver = Solver::new(&p, &lc, cfg.clone()).unwrap();
            group.bench_function(format!("{name} {:?}", cfg.variant), |b| b.iter(|| solver.run(None).unwrap()));
        }
    }
    group.finish();
}

fn bench_output(c: &mut Criterion) {
    let (p, lc) = generate_problem(&GeneratorSpec::random_qp(5, 10, 20.0, 42)).unwrap();
    let star = reference_solve(&p, &lc).unwrap();
    let cfg = SolverConfig { step: 1e-4, max_iter: 2_000, ..SolverConfig::natural() };
    let traj = Solver::new(&p, &lc, cfg).unwrap().run(Some(&star)).unwrap();
    c.bench_function("trajectory_csv 2k rows full state", |b| b.iter(|| trajectory_csv(black_box(&traj), true)));
}

criterion_group!(benches, bench_setup, bench_integration, bench_output);
criterion_main!(benches);
