use pdflow::fixtures::{canonical, canonical_solution};
use pdflow::*;

fn suite_problem(i: u64) -> (ProblemSpec, LinearConstraints) {
    let m = 1 + (i % 6) as usize;
    let n = m + (i / 6 % 5) as usize;
    let h = if i % 2 == 0 { 2.0 } else { 20.0 };
    generate_problem(&GeneratorSpec::random_qp(m, n, h, 500 + i)).unwrap()
}

fn fast_config(p: &ProblemSpec, lc: &LinearConstraints, cfg: SolverConfig) -> SolverConfig {
    let probe = Solver::new(p, lc, SolverConfig { step: 1.0, ..cfg.clone() }).unwrap();
    let step = dynamics::stable_step(probe.field_jacobian(), cfg.alpha, cfg.beta, 0.5);
    SolverConfig { step, ..cfg }
}

#[test]
fn both_variants_reach_the_canonical_saddle() {
    let (p, lc) = canonical();
    let star = canonical_solution();
    for cfg in [SolverConfig::euclidean(), SolverConfig::natural()] {
        let cfg = SolverConfig { tol: 1e-10, ..fast_config(&p, &lc, cfg) };
        let traj = solve(&p, &lc, &cfg).unwrap();
        assert!(traj.converged);
        assert!((traj.final_z.stacked() - star.stacked()).amax() < 1e-6, "{:?}", traj.final_z);
    }
}

#[test]
fn natural_flow_limits_match_the_oracle() {
    for i in 0..30 {
        let (p, lc) = suite_problem(i);
        let star = reference_solve(&p, &lc).unwrap();
        let cfg = SolverConfig { tol: 1e-10, max_iter: 1_000_000, ..fast_config(&p, &lc, SolverConfig::natural()) };
        let traj = solve(&p, &lc, &cfg).unwrap();
        assert!(traj.converged, "problem {i}");
        let gap = (traj.final_z.stacked() - star.stacked()).amax();
        assert!(gap < 1e-6, "problem {i}: gap {gap:e}");
        assert!(kkt_residuals(&p, &lc, &traj.final_z, 1e-8).unwrap().passed, "problem {i}");
    }
}

#[test]
fn limits_do_not_depend_on_the_start() {
    for i in 0..10 {
        let (p, lc) = suite_problem(i);
        let base = SolverConfig { tol: 1e-10, max_iter: 1_000_000, ..fast_config(&p, &lc, SolverConfig::natural()) };
        let a = solve(&p, &lc, &base).unwrap();
        let b = solve(&p, &lc, &SolverConfig { start: Start::Random { radius: 5.0 }, seed: i, ..base.clone() }).unwrap();
        assert!(a.converged && b.converged);
        assert!((a.final_z.stacked() - b.final_z.stacked()).amax() <= 10.0 * 1e-6, "problem {i}");
    }
}

#[test]
fn converged_points_are_variational_fixed_points() {
    let (p, lc) = suite_problem(3);
    let cfg = SolverConfig { tol: 1e-10, max_iter: 1_000_000, ..fast_config(&p, &lc, SolverConfig::euclidean()) };
    let traj = solve(&p, &lc, &cfg).unwrap();
    assert!(traj.converged);
    let check = check_vi_fixed_point(&p, &lc, &cfg, &traj.final_z, 200, 9).unwrap();
    assert!(check.passed(1e-8), "{check:?}");
}

#[test]
fn certificates_hold_across_the_suite() {
    for i in 0..40 {
        let (p, lc) = suite_problem(i);
        let k = choose_k(compute_rho(&p, &lc).unwrap(), 1.01).unwrap();
        let cert = certify_monotonicity(&p, &lc, k).unwrap();
        assert!(cert.passed_lemma1 && cert.passed_prop1, "problem {i}: {cert:?}");
        let geom = NaturalGradientParams::with_k(&p, &lc, k).unwrap();
        let sample = sample_monotonicity(&p, &lc, &geom, 50, i).unwrap();
        assert!(sample.euclidean_ratio >= -1e-10, "problem {i}: {sample:?}");
    }
}

#[test]
fn fitted_rate_dominates_the_envelope() {
    let (p, lc) = canonical();
    let star = canonical_solution();
    let geom = NaturalGradientParams::from_multiplier(&p, &lc, 10.0).unwrap();
    let alpha = 0.5 * geom.alpha_max;
    let cfg = SolverConfig { alpha, step: 1e-3, tol: 1e-12, max_iter: 50_000, ..SolverConfig::natural() };
    let traj = Solver::new(&p, &lc, cfg).unwrap().run(Some(&star)).unwrap();
    let fit = traj.fitted_rate.unwrap();
    assert!(fit.rate >= geom.envelope_rate(alpha, 1.0), "{fit:?}");
    let d0 = traj.records[0].dist_to_ref.unwrap();
    let bound = geom.envelope_rate(alpha, 1.0);
    for rec in &traj.records {
        assert!(rec.dist_to_ref.unwrap() <= d0 * (-bound * rec.time).exp() * (1.0 + 1e-12));
    }
}

#[test]
fn tighter_tolerance_extends_the_same_records() {
    let (p, lc) = suite_problem(4);
    let loose = SolverConfig { tol: 1e-6, ..fast_config(&p, &lc, SolverConfig::natural()) };
    let tight = SolverConfig { tol: 1e-10, ..loose.clone() };
    let a = solve(&p, &lc, &loose).unwrap();
    let b = solve(&p, &lc, &tight).unwrap();
    assert!(a.records.len() <= b.records.len());
    assert_eq!(a.records[..], b.records[..a.records.len()]);
}

#[test]
fn large_instances_use_the_dual_fallback() {
    let (p, lc) = generate_problem(&GeneratorSpec::random_reg_lsq(24, 30, 1.0, 3)).unwrap();
    let star = reference_solve(&p, &lc).unwrap();
    assert!(kkt_residuals(&p, &lc, &star, 1e-8).unwrap().passed);
}
