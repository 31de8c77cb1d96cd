//! Subcommand implementations. Each returns the text to print on stdout.

use std::path::Path;

use pdflow::{
    audit_assumptions, auto_step, certify_monotonicity, choose_k, compute_rho, diagnose_metric_consistency,
    fit_log_decay, reference_solve, AssumptionReport, LinearConstraints, MonotonicityCertificate, PrimalDualPoint,
    ProblemSpec, Solver, SolverConfig, Trajectory, Variant,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, StepRule, AUTO_STEP_SAFETY};
use crate::error::{CliError, Result};
use crate::output::{self, fmt_float, RunSummary};

/// Environment variable capping the number of concurrent sweep runs.
pub const THREADS_ENV: &str = "PDFLOW_THREADS";

/// Minimum fit quality for the geometric-decay claim of `example2`.
pub const MIN_R_SQUARED: f64 = 0.95;

fn audited_problem(cfg: &ExperimentConfig) -> Result<(ProblemSpec, LinearConstraints)> {
    cfg.validate()?;
    let (p, lc) = cfg.problem_source()?.build()?;
    audit_assumptions(&p, &lc).require()?;
    Ok((p, lc))
}

/// Solver settings with the output stride and the resolved step.
fn solver_config(cfg: &ExperimentConfig, p: &ProblemSpec, lc: &LinearConstraints) -> Result<SolverConfig> {
    let mut solver = SolverConfig {
        stride: cfg.output.stride,
        ..cfg.solver.clone()
    };
    solver.step = match cfg.step {
        StepRule::Fixed(step) => step,
        StepRule::Auto(_) => auto_step(p, lc, &solver, AUTO_STEP_SAFETY)?,
    };
    Ok(solver)
}

fn write_run(dir: &Path, stem: &str, traj: &Trajectory, full_state: bool) -> Result<RunSummary> {
    let summary = RunSummary::from_trajectory(traj);
    output::write_file(dir, &format!("{stem}.csv"), &output::trajectory_csv(traj, full_state))?;
    output::write_file(dir, &format!("{stem}.json"), &output::to_json(&summary))?;
    Ok(summary)
}

/// Integrates the configured problem and writes `solve.csv` and
/// `solve.json`.
pub fn run_solve(cfg: &ExperimentConfig) -> Result<String> {
    let (p, lc) = audited_problem(cfg)?;
    let solver = solver_config(cfg, &p, &lc)?;
    let star = reference_solve(&p, &lc)?;
    let traj = Solver::new(&p, &lc, solver)?.run(Some(&star))?;
    output::ensure_dir(&cfg.output.dir)?;
    let summary = write_run(&cfg.output.dir, "solve", &traj, cfg.output.full_state)?;
    Ok(output::to_json(&summary))
}

#[derive(Debug, Serialize)]
struct CheckReport {
    passed: bool,
    audit: AssumptionReport,
    k_multiplier: f64,
    rho: Option<f64>,
    k: Option<f64>,
    certificate: Option<MonotonicityCertificate>,
    /// `‖G_r(0) − R⁺G(0)‖₂`.
    metric_discrepancy_at_origin: Option<f64>,
}

/// Audits the problem, certifies monotonicity at `k = k_multiplier·ϱ` and
/// compares the natural gradient with the metric pseudoinverse. Writes
/// `check.json`; a failed audit still writes the report and then exits
/// with the audit code.
pub fn run_check(cfg: &ExperimentConfig) -> Result<String> {
    let (p, lc) = cfg.problem_source()?.build()?;
    let audit = audit_assumptions(&p, &lc);
    let mult = cfg.solver.k_multiplier;
    let mut report = CheckReport {
        passed: false,
        audit,
        k_multiplier: mult,
        rho: None,
        k: None,
        certificate: None,
        metric_discrepancy_at_origin: None,
    };
    output::ensure_dir(&cfg.output.dir)?;
    if let Err(e) = report.audit.require() {
        let text = output::to_json(&report);
        output::write_file(&cfg.output.dir, "check.json", &text)?;
        return Err(e.into());
    }
    let rho = compute_rho(&p, &lc)?;
    let k = choose_k(rho, mult)?;
    let cert = certify_monotonicity(&p, &lc, k)?;
    let origin = PrimalDualPoint::origin(lc.n(), lc.m());
    let consistency = diagnose_metric_consistency(&p, &lc, k, &origin)?;
    report.passed = cert.passed_lemma1 && cert.passed_prop1 && cert.schur_min_eig > 0.0;
    report.rho = Some(rho);
    report.k = Some(k);
    report.certificate = Some(cert);
    report.metric_discrepancy_at_origin = Some(consistency.discrepancy);
    let text = output::to_json(&report);
    output::write_file(&cfg.output.dir, "check.json", &text)?;
    Ok(text)
}

/// Number of concurrent sweep runs: `PDFLOW_THREADS` if set, capped by the
/// number of runs.
pub fn sweep_threads(runs: usize) -> Result<usize> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => t,
            _ => return Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => runs,
    };
    Ok(cap.min(runs).max(1))
}

#[derive(Debug, Serialize)]
struct SweepRun {
    k_multiplier: f64,
    /// First iteration with `‖x − x*‖₂ ≤ milestone`.
    milestone_iter: Option<usize>,
    #[serde(flatten)]
    summary: RunSummary,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    step: f64,
    milestone: f64,
    runs: Vec<SweepRun>,
    /// `None` for a single-run sweep.
    milestones_strictly_decreasing: Option<bool>,
    fitted_rates_increasing: Option<bool>,
}

/// Natural-gradient runs over the k multipliers of the sweep with one
/// common step, the automatic step of the largest multiplier unless a step
/// is fixed. Writes `example1_k<mult>.{csv,json}` per run and the sweep
/// summary `example1.json`, then checks that the iterations needed to
/// reach the primal milestone strictly decrease in k.
pub fn run_example1(cfg: &ExperimentConfig) -> Result<String> {
    let (p, lc) = audited_problem(cfg)?;
    let sweep = cfg.sweep.clone().unwrap_or_else(|| ExperimentConfig::example1().sweep.unwrap());
    let largest = sweep.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = SolverConfig {
        variant: Variant::NaturalGradient,
        ..cfg.solver.clone()
    };
    let probe = ExperimentConfig {
        solver: SolverConfig { k_multiplier: largest, ..base.clone() },
        ..cfg.clone()
    };
    let step = solver_config(&probe, &p, &lc)?.step;
    let star = reference_solve(&p, &lc)?;

    let threads = sweep_threads(sweep.len())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Claim(format!("thread pool: {e}")))?;
    let results: Vec<pdflow::Result<Trajectory>> = pool.install(|| {
        sweep
            .par_iter()
            .map(|&mult| {
                let solver = SolverConfig {
                    k_multiplier: mult,
                    step,
                    stride: cfg.output.stride,
                    ..base.clone()
                };
                Solver::new(&p, &lc, solver)?.run(Some(&star))
            })
            .collect()
    });

    output::ensure_dir(&cfg.output.dir)?;
    let mut runs = Vec::with_capacity(sweep.len());
    for (&mult, result) in sweep.iter().zip(results) {
        let traj = result.map_err(|e| CliError::from(e).with_context(format!("k multiplier {}", fmt_float(mult))))?;
        let summary = write_run(&cfg.output.dir, &format!("example1_k{}", fmt_float(mult)), &traj, cfg.output.full_state)?;
        runs.push(SweepRun {
            k_multiplier: mult,
            milestone_iter: traj.milestone_iter,
            summary,
        });
    }

    let ordered = multiplier_order(&sweep);
    let (decreasing, increasing) = if runs.len() < 2 {
        (None, None)
    } else {
        let milestones: Vec<Option<usize>> = ordered.iter().map(|&i| runs[i].milestone_iter).collect();
        let rates: Vec<Option<f64>> = ordered.iter().map(|&i| runs[i].summary.fitted_rate).collect();
        (
            Some(milestones.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a))),
            Some(rates.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b >= a))),
        )
    };
    let report = SweepReport {
        step,
        milestone: base.milestone,
        runs,
        milestones_strictly_decreasing: decreasing,
        fitted_rates_increasing: increasing,
    };
    let text = output::to_json(&report);
    output::write_file(&cfg.output.dir, "example1.json", &text)?;
    if decreasing == Some(false) {
        let counts: Vec<String> = ordered
            .iter()
            .map(|&i| {
                let run = &report.runs[i];
                let reached = run.milestone_iter.map_or("never".to_string(), |it| it.to_string());
                format!("k/rho {}: {reached}", fmt_float(run.k_multiplier))
            })
            .collect();
        return Err(CliError::Claim(format!(
            "iterations to reach the milestone do not strictly decrease in k ({})",
            counts.join(", ")
        )));
    }
    Ok(text)
}

fn multiplier_order(sweep: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sweep.len()).collect();
    order.sort_by(|&a, &b| sweep[a].total_cmp(&sweep[b]));
    order
}

/// One natural-gradient run on the configured least-squares instance.
/// Writes `example2.csv`, `example2.json` and the per-iteration squared
/// primal error `example2_sq_error.csv`, then checks that the logarithm of
/// the distance to the solution decays linearly with `R² ≥ 0.95`.
pub fn run_example2(cfg: &ExperimentConfig) -> Result<String> {
    let (p, lc) = audited_problem(cfg)?;
    let solver = SolverConfig {
        variant: Variant::NaturalGradient,
        ..solver_config(cfg, &p, &lc)?
    };
    let star = reference_solve(&p, &lc)?;
    let traj = Solver::new(&p, &lc, solver)?.run(Some(&star))?;

    output::ensure_dir(&cfg.output.dir)?;
    let summary = write_run(&cfg.output.dir, "example2", &traj, cfg.output.full_state)?;
    let mut sq = String::from("iter,time,sq_error\n");
    for rec in &traj.records {
        let e = (&rec.z.x - &star.x).norm_squared();
        sq.push_str(&format!("{},{},{}\n", rec.iter, fmt_float(rec.time), fmt_float(e)));
    }
    output::write_file(&cfg.output.dir, "example2_sq_error.csv", &sq)?;

    match (summary.fitted_rate, summary.r_squared) {
        (Some(rate), Some(r2)) if rate > 0.0 && r2 >= MIN_R_SQUARED => Ok(output::to_json(&summary)),
        (Some(rate), Some(r2)) => Err(CliError::Claim(format!(
            "no geometric decay: fitted rate {rate:e}, R^2 {r2} (need rate > 0 and R^2 >= {MIN_R_SQUARED})"
        ))),
        _ => Err(CliError::Claim("too few records above the noise floor to fit a rate".into())),
    }
}

#[derive(Debug, Serialize)]
struct RateReport {
    fitted_rate: f64,
    r_squared: f64,
    points: usize,
}

/// Fits `ln dist_to_ref ≈ a − rate·time` to a trajectory CSV, stopping at
/// the round-off floor of the largest distance.
pub fn run_rate(csv: &Path) -> Result<String> {
    let text = std::fs::read_to_string(csv).map_err(|e| CliError::io(csv, e))?;
    let series = output::read_distance_series(&text)?;
    let scale = series.iter().map(|&(_, d)| d).fold(1.0, f64::max);
    let fit = fit_log_decay(&series, 100.0 * f64::EPSILON * scale)?;
    Ok(output::to_json(&RateReport {
        fitted_rate: fit.rate,
        r_squared: fit.r_squared,
        points: fit.points,
    }))
}
