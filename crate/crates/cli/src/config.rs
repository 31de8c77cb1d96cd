//! Experiment configuration.
//!
//! A config file is TOML with the tables `[problem]`, `[solver]` and
//! `[output]` and an optional top-level `sweep` array of k multipliers.
//! Unknown keys are rejected. Every key is optional in the file; missing
//! keys fall back to the defaults of the subcommand being run.
//!
//! ```toml
//! sweep = [1.01, 10.0]
//!
//! [problem]
//! family = "RandomQP"
//! m = 5
//! n = 10
//! seed = 42
//! hessian_scale = 20.0
//!
//! [solver]
//! variant = "natural"
//! step = "auto"
//!
//! [output]
//! dir = "out"
//! stride = 100
//! ```
//!
//! A problem is either generated (`family`, `m`, `n`, `seed`,
//! `hessian_scale`, `theta`) or given inline as a quadratic (`hessian`,
//! `linear`) or a regularized least-squares objective (`c`, `d`, `theta`),
//! together with the constraint rows `a` and right-hand side `b`.

use std::path::{Path, PathBuf};

use pdflow::{
    DMatrix, DVector, Family, GeneratorSpec, LinearConstraints, PrimalDualPoint, ProblemSpec, SolverConfig, Start,
    Variant,
};
use serde::Deserialize;

use crate::error::{CliError, Result};

/// Safety factor applied to the stability limit when `step = "auto"`.
pub const AUTO_STEP_SAFETY: f64 = 0.9;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: Option<RawProblem>,
    solver: Option<RawSolver>,
    sweep: Option<Vec<f64>>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    family: Option<Family>,
    m: Option<usize>,
    n: Option<usize>,
    seed: Option<u64>,
    hessian_scale: Option<f64>,
    theta: Option<f64>,
    hessian: Option<Vec<Vec<f64>>>,
    linear: Option<Vec<f64>>,
    c: Option<Vec<Vec<f64>>>,
    d: Option<Vec<f64>>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    variant: Option<Variant>,
    alpha: Option<f64>,
    beta: Option<f64>,
    step: Option<StepRule>,
    k_multiplier: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    seed: Option<u64>,
    enforce_rate_bound: Option<bool>,
    milestone: Option<f64>,
    start_radius: Option<f64>,
    x0: Option<Vec<f64>>,
    lambda0: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    stride: Option<usize>,
    full_state: Option<bool>,
}

/// Euler step: a fixed value, or `"auto"` for [`AUTO_STEP_SAFETY`] times
/// the linear stability limit.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum StepRule {
    Fixed(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl StepRule {
    pub const AUTO: StepRule = StepRule::Auto(AutoKeyword::Auto);
}

/// Where the problem instance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSource {
    Generated(GeneratorSpec),
    Inline {
        problem: ProblemSpec,
        constraints: LinearConstraints,
    },
}

impl ProblemSource {
    pub fn build(&self) -> Result<(ProblemSpec, LinearConstraints)> {
        match self {
            ProblemSource::Generated(spec) => Ok(pdflow::generate_problem(spec)?),
            ProblemSource::Inline { problem, constraints } => Ok((problem.clone(), constraints.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub stride: usize,
    pub full_state: bool,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Option<ProblemSource>,
    /// Solver settings; `solver.step` is ignored unless `step` is fixed.
    pub solver: SolverConfig,
    pub step: StepRule,
    pub sweep: Option<Vec<f64>>,
    pub output: OutputSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: None,
            solver: SolverConfig::default(),
            step: StepRule::Fixed(SolverConfig::default().step),
            sweep: None,
            output: OutputSettings {
                dir: PathBuf::from("out"),
                stride: 1,
                full_state: false,
            },
        }
    }
}

impl ExperimentConfig {
    /// Seeded `m = 5`, `n = 10`, `H = 20I` instance swept over
    /// `k/ϱ ∈ {1.01, 10, 100, 1000}` with a common automatic step.
    pub fn example1() -> Self {
        Self {
            problem: Some(ProblemSource::Generated(GeneratorSpec::random_qp(5, 10, 20.0, 42))),
            solver: SolverConfig {
                max_iter: 3_000_000,
                ..SolverConfig::natural()
            },
            step: StepRule::AUTO,
            sweep: Some(vec![1.01, 10.0, 100.0, 1000.0]),
            output: OutputSettings {
                stride: 100,
                ..Self::default().output
            },
        }
    }

    /// Seeded `m = 30`, `n = 50` regularized least squares with `θ = 1`,
    /// `k = 1000ϱ`, `α = β = 1`.
    pub fn example2() -> Self {
        Self {
            problem: Some(ProblemSource::Generated(GeneratorSpec::random_reg_lsq(30, 50, 1.0, 7))),
            solver: SolverConfig {
                k_multiplier: 1000.0,
                tol: 1e-6,
                max_iter: 5_000_000,
                ..SolverConfig::natural()
            },
            step: StepRule::AUTO,
            sweep: None,
            output: OutputSettings {
                stride: 5_000,
                ..Self::default().output
            },
        }
    }

    /// Parses `text` on top of `self`.
    pub fn merge_toml(self, text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        self.merge(raw)
    }

    pub fn merge_file(self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.merge_toml(&text)
            .map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
                other => other,
            })
    }

    fn merge(mut self, raw: RawConfig) -> Result<Self> {
        if let Some(p) = raw.problem {
            self.problem = Some(resolve_problem(p, self.problem.as_ref())?);
        }
        if let Some(s) = raw.solver {
            self.merge_solver(s)?;
        }
        if let Some(sweep) = raw.sweep {
            self.sweep = Some(sweep);
        }
        if let Some(o) = raw.output {
            if let Some(dir) = o.dir {
                self.output.dir = dir;
            }
            if let Some(stride) = o.stride {
                self.output.stride = stride;
            }
            if let Some(full) = o.full_state {
                self.output.full_state = full;
            }
        }
        Ok(self)
    }

    fn merge_solver(&mut self, s: RawSolver) -> Result<()> {
        let cfg = &mut self.solver;
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = s.$field { cfg.$field = v; })* };
        }
        set!(variant, alpha, beta, k_multiplier, tol, max_iter, seed, enforce_rate_bound, milestone);
        if let Some(step) = s.step {
            self.step = step;
        }
        match (s.start_radius, s.x0, s.lambda0) {
            (None, None, None) => {}
            (Some(radius), None, None) => cfg.start = Start::Random { radius },
            (None, Some(x), Some(lambda)) => {
                cfg.start = Start::Point(
                    PrimalDualPoint::new(DVector::from_vec(x), DVector::from_vec(lambda))
                        .map_err(|e| CliError::Config(e.to_string()))?,
                )
            }
            _ => {
                return Err(CliError::Config(
                    "solver start: give either start_radius or both x0 and lambda0".into(),
                ))
            }
        }
        Ok(())
    }

    /// Checks everything that does not need the problem instance.
    pub fn validate(&self) -> Result<()> {
        if self.output.stride == 0 {
            return Err(CliError::Config("output.stride must be at least 1".into()));
        }
        if let StepRule::Fixed(step) = self.step {
            SolverConfig { step, ..self.solver.clone() }.validate()?;
        } else {
            SolverConfig { step: 1.0 / self.solver.beta, ..self.solver.clone() }.validate()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(CliError::Config("sweep must list at least one multiplier".into()));
            }
            if let Some(bad) = sweep.iter().find(|&&m| !(m > 1.0 && m.is_finite())) {
                return Err(CliError::Config(format!("sweep multiplier {bad} must exceed 1")));
            }
        }
        Ok(())
    }

    pub fn problem_source(&self) -> Result<&ProblemSource> {
        self.problem
            .as_ref()
            .ok_or_else(|| CliError::Config("no problem given; pass --config with a [problem] table".into()))
    }

    /// Applies `--seed`: the generator seed of a generated problem and the
    /// solver seed.
    pub fn set_seed(&mut self, seed: u64) {
        if let Some(ProblemSource::Generated(spec)) = &mut self.problem {
            spec.seed = seed;
        }
        self.solver.seed = seed;
    }
}

fn resolve_problem(p: RawProblem, base: Option<&ProblemSource>) -> Result<ProblemSource> {
    let config_err = |msg: &str| CliError::Config(format!("problem: {msg}"));
    let inline_given = p.hessian.is_some() || p.linear.is_some() || p.c.is_some() || p.d.is_some();
    let constraints_given = p.a.is_some() || p.b.is_some();
    let generator_given =
        p.family.is_some() || p.m.is_some() || p.n.is_some() || p.seed.is_some() || p.hessian_scale.is_some();

    if generator_given || (!inline_given && !constraints_given) {
        if inline_given || constraints_given {
            return Err(config_err("generator keys cannot be mixed with inline matrices"));
        }
        let mut spec = match base {
            Some(ProblemSource::Generated(spec)) => spec.clone(),
            _ => GeneratorSpec::random_qp(0, 0, 1.0, 0),
        };
        if let Some(family) = p.family {
            spec.family = family;
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = p.$field { spec.$field = v; })* };
        }
        set!(m, n, seed, hessian_scale, theta);
        if spec.m == 0 || spec.n == 0 {
            return Err(config_err("generated problems need positive m and n"));
        }
        return Ok(ProblemSource::Generated(spec));
    }

    let (a, b) = match (p.a, p.b) {
        (Some(a), Some(b)) => (matrix("a", &a)?, DVector::from_vec(b)),
        _ => return Err(config_err("inline problems need both `a` and `b`")),
    };
    let problem = match (p.hessian, p.c) {
        (Some(h), None) => {
            if p.d.is_some() || p.theta.is_some() {
                return Err(config_err("`d` and `theta` belong to least-squares problems, not `hessian`"));
            }
            let h = matrix("hessian", &h)?;
            let linear = p.linear.map(DVector::from_vec).unwrap_or_else(|| DVector::zeros(h.nrows()));
            ProblemSpec::quadratic(h, linear)
        }
        (None, Some(c)) => {
            if p.linear.is_some() {
                return Err(config_err("`linear` belongs to quadratic problems, not `c`"));
            }
            let d = p.d.ok_or_else(|| config_err("least-squares problems need `d`"))?;
            let theta = p.theta.ok_or_else(|| config_err("least-squares problems need `theta`"))?;
            ProblemSpec::regularized_least_squares(matrix("c", &c)?, DVector::from_vec(d), theta)
        }
        (Some(_), Some(_)) => return Err(config_err("give either `hessian` or `c`, not both")),
        (None, None) => return Err(config_err("inline problems need `hessian` or `c`")),
    }
    .map_err(|e| config_err(&e.to_string()))?;
    let constraints = LinearConstraints::new(a, b).map_err(|e| config_err(&e.to_string()))?;
    Ok(ProblemSource::Inline { problem, constraints })
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(CliError::Config(format!("problem.{name} must be a non-empty matrix")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!("problem.{name} has rows of unequal length")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str = r#"
[problem]
hessian = [[2.0]]
a = [[-1.0]]
b = [-1.0]
"#;

    #[test]
    fn inline_quadratic() {
        let cfg = ExperimentConfig::default().merge_toml(CANONICAL).unwrap();
        let (p, lc) = cfg.problem_source().unwrap().build().unwrap();
        assert_eq!(p.hessian()[(0, 0)], 2.0);
        assert_eq!(p.linear_term()[0], 0.0);
        assert_eq!((lc.m(), lc.n()), (1, 1));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[solver]\nalpha = 1.0\nalhpa = 2.0\n",
            "[outptu]\ndir = \"x\"\n",
            "[problem]\nfamily = \"RandomQP\"\nm = 1\nn = 2\nsed = 3\n",
            "speed = 1\n",
        ] {
            let err = ExperimentConfig::default().merge_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn file_values_override_subcommand_defaults() {
        let text = "sweep = [2.0]\n[solver]\ntol = 1e-7\nstep = 0.001\n[problem]\nseed = 9\n[output]\nstride = 3\n";
        let cfg = ExperimentConfig::example1().merge_toml(text).unwrap();
        assert_eq!(cfg.sweep, Some(vec![2.0]));
        assert_eq!(cfg.solver.tol, 1e-7);
        assert_eq!(cfg.step, StepRule::Fixed(1e-3));
        assert_eq!(cfg.output.stride, 3);
        match cfg.problem.unwrap() {
            ProblemSource::Generated(spec) => assert_eq!((spec.m, spec.n, spec.seed), (5, 10, 9)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn step_accepts_auto_keyword() {
        let cfg = ExperimentConfig::default().merge_toml("[solver]\nstep = \"auto\"\n").unwrap();
        assert_eq!(cfg.step, StepRule::AUTO);
        assert!(ExperimentConfig::default().merge_toml("[solver]\nstep = \"fast\"\n").is_err());
    }

    #[test]
    fn mixed_problem_kinds_are_rejected() {
        let text = "[problem]\nfamily = \"RandomQP\"\nm = 1\nn = 1\nhessian = [[1.0]]\n";
        assert!(ExperimentConfig::default().merge_toml(text).is_err());
        let text = "[problem]\nhessian = [[1.0]]\nc = [[1.0]]\na = [[1.0]]\nb = [1.0]\n";
        assert!(ExperimentConfig::default().merge_toml(text).is_err());
        let text = "[problem]\nhessian = [[1.0, 0.0], [0.0]]\na = [[1.0, 0.0]]\nb = [1.0]\n";
        assert!(ExperimentConfig::default().merge_toml(text).is_err());
    }

    #[test]
    fn validation_rejects_bad_multipliers() {
        let mut cfg = ExperimentConfig::example1();
        cfg.solver.k_multiplier = 0.5;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        let mut cfg = ExperimentConfig::example1();
        cfg.sweep = Some(vec![10.0, 1.0]);
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn seed_flag_reaches_generator_and_solver() {
        let mut cfg = ExperimentConfig::example2();
        cfg.set_seed(11);
        assert_eq!(cfg.solver.seed, 11);
        match cfg.problem.unwrap() {
            ProblemSource::Generated(spec) => assert_eq!(spec.seed, 11),
            other => panic!("{other:?}"),
        }
    }
}
