//! Projected primal-dual dynamics `ż = β(P[z − αĜ(z)] − z)` and its
//! explicit Euler discretization.
//!
//! `Ĝ` is either the descent-ascent gradient map `G` (Euclidean variant) or
//! the natural gradient `G_r = T·G` with `T = [[kI, Aᵀ], [A, kI]]`
//! (natural-gradient variant). The Euclidean variant projects with
//! componentwise clipping of `λ`. The natural-gradient variant projects in
//! the metric `T⁻¹`, which clips `λ` and moves `x` by `Aᵀ/k` times the
//! clipped amount; with that projection the equilibria are exactly the KKT
//! points whenever `k > √q2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::geometry::{self, MetricR, NaturalGradientParams, DEFAULT_K_MULTIPLIER};
use crate::linalg;
use crate::problem::{audit_assumptions, lagrangian, LinearConstraints, PrimalDualPoint, ProblemSpec};
use crate::verification;

/// Iterates with `‖z‖∞` above this are treated as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Slack on `s·β ≤ 1` absorbing the rounding of `s` and `β`.
const STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Euclidean,
    #[serde(rename = "natural", alias = "natural_gradient")]
    NaturalGradient,
}

/// Initial state of a solve.
#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    /// `x = 0, λ = 0`.
    Origin,
    /// `x` uniform in `[−r, r]ⁿ`, `λ` uniform in `[0, r]ᵐ`, seeded by
    /// [`SolverConfig::seed`].
    Random { radius: f64 },
    Point(PrimalDualPoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub beta: f64,
    /// Euler step `s`.
    pub step: f64,
    /// `k = k_multiplier · ϱ` for the natural-gradient variant.
    pub k_multiplier: f64,
    /// Stop once `‖z̃ − z‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Keep every `stride`-th iteration (the first and last are always kept).
    pub stride: usize,
    /// Reject `α ≥ 4ν/L²` for the natural-gradient variant.
    pub enforce_rate_bound: bool,
    pub start: Start,
    /// Primal distance whose first crossing is reported when a reference is
    /// supplied.
    pub milestone: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            variant: Variant::NaturalGradient,
            alpha: 1.0,
            beta: 1.0,
            step: 1e-2,
            k_multiplier: DEFAULT_K_MULTIPLIER,
            tol: 1e-9,
            max_iter: 100_000,
            seed: 0,
            stride: 1,
            enforce_rate_bound: false,
            start: Start::Origin,
            milestone: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn euclidean() -> Self {
        Self {
            variant: Variant::Euclidean,
            ..Self::default()
        }
    }

    pub fn natural() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("step", self.step)?;
        positive("tol", self.tol)?;
        check_step(self.step, self.beta)?;
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if self.stride == 0 {
            return Err(invalid("stride", "must be at least 1"));
        }
        if self.variant == Variant::NaturalGradient && !(self.k_multiplier > 1.0) {
            return Err(invalid("k_multiplier", format!("must exceed 1, got {}", self.k_multiplier)));
        }
        if let Start::Random { radius } = self.start {
            positive("start radius", radius)?;
        }
        Ok(())
    }
}

fn check_step(step: f64, beta: f64) -> Result<()> {
    if !(step >= 0.0) {
        return Err(invalid("step", format!("must be non-negative, got {step}")));
    }
    if step * beta > 1.0 + STEP_SLACK {
        return Err(invalid("step", format!("step·beta = {} exceeds 1", step * beta)));
    }
    Ok(())
}

/// `G(z) = [∇f(x) + Aᵀλ ; −(Ax − b)]`.
pub fn gradient_map(p: &ProblemSpec, lc: &LinearConstraints, z: &PrimalDualPoint) -> Result<DVector<f64>> {
    z.check_dims(lc.n(), lc.m())?;
    check_len("hessian dimension", lc.n(), p.dim())?;
    let top = p.grad_objective(&z.x)? + lc.a().transpose() * &z.lambda;
    let bottom = -lc.eval_constraints(&z.x)?;
    Ok(linalg::stack(&top, &bottom))
}

/// Constant Jacobian `[[H, Aᵀ], [−A, 0]]` of [`gradient_map`].
pub fn gradient_map_jacobian(p: &ProblemSpec, lc: &LinearConstraints) -> DMatrix<f64> {
    let a = lc.a();
    linalg::block2(p.hessian(), &a.transpose(), &(-a), &DMatrix::zeros(lc.m(), lc.m()))
}

/// Euclidean projection onto `Ω = ℝⁿ × ℝᵐ₊`: `x` passes through, `λ` is
/// clipped at zero.
pub fn project_omega(z_raw: &DVector<f64>, n: usize) -> PrimalDualPoint {
    let mut z = PrimalDualPoint::from_stacked_unchecked(z_raw, n);
    z.lambda.apply(|v| *v = v.max(0.0));
    z
}

/// Projection onto `Ω` in the metric `T⁻¹`, `T = [[kI, Aᵀ], [A, kI]]`:
/// `λ ← max(λ, 0)` and `x ← x − (Aᵀ/k)(λ_raw − λ)`.
pub fn project_natural(lc: &LinearConstraints, k: f64, z_raw: &DVector<f64>) -> Result<PrimalDualPoint> {
    check_len("z", lc.n() + lc.m(), z_raw.len())?;
    if !(k > 0.0) {
        return Err(invalid("k", format!("must be positive, got {k}")));
    }
    let mut z = project_omega(z_raw, lc.n());
    let clipped = z_raw.rows(lc.n(), lc.m()) - &z.lambda;
    if clipped.iter().any(|v| *v != 0.0) {
        z.x -= lc.a().transpose() * clipped / k;
    }
    Ok(z)
}

/// `ż = β(P[z − αĜ(z)] − z)`.
pub fn rhs(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    cfg: &SolverConfig,
    geom: Option<&NaturalGradientParams>,
    z: &PrimalDualPoint,
) -> Result<DVector<f64>> {
    let target = projected_target(p, lc, cfg, geom, z)?;
    Ok((target.stacked() - z.stacked()) * cfg.beta)
}

/// `z̃ = P[z − αĜ(z)]`.
pub fn projected_target(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    cfg: &SolverConfig,
    geom: Option<&NaturalGradientParams>,
    z: &PrimalDualPoint,
) -> Result<PrimalDualPoint> {
    match (cfg.variant, geom) {
        (Variant::Euclidean, None) => {
            let g = gradient_map(p, lc, z)?;
            Ok(project_omega(&(z.stacked() - g * cfg.alpha), lc.n()))
        }
        (Variant::NaturalGradient, Some(geom)) => {
            let g = geometry::natural_gradient(p, lc, geom.k, z)?;
            project_natural(lc, geom.k, &(z.stacked() - g * cfg.alpha))
        }
        (Variant::NaturalGradient, None) => Err(invalid(
            "geom",
            "natural-gradient variant requires NaturalGradientParams",
        )),
        (Variant::Euclidean, Some(_)) => Err(invalid("geom", "Euclidean variant takes no geometry")),
    }
}

/// `z⁺ = (1 − sβ)z + sβ·P[z − αĜ(z)]`.
pub fn euler_step(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    cfg: &SolverConfig,
    geom: Option<&NaturalGradientParams>,
    z: &PrimalDualPoint,
) -> Result<PrimalDualPoint> {
    check_step(cfg.step, cfg.beta)?;
    let target = projected_target(p, lc, cfg, geom, z)?;
    let w = cfg.step * cfg.beta;
    Ok(PrimalDualPoint::new_unchecked(
        &z.x * (1.0 - w) + &target.x * w,
        &z.lambda * (1.0 - w) + &target.lambda * w,
    ))
}

/// Largest Euler step for which the linearized unconstrained update
/// `z ← z − sαβ·J(z − z*)` is stable, scaled by `safety` and capped at
/// `1/β`.
///
/// Stability requires `|1 − sαβμ| < 1` for every eigenvalue `μ` of `J`,
/// i.e. `s < 2Re(μ)/(αβ|μ|²)`. If the spectrum cannot be computed the
/// norm bound `s < 2λmin(sym J)/(αβ‖J‖²)` is used instead.
pub fn stable_step(jacobian: &DMatrix<f64>, alpha: f64, beta: f64, safety: f64) -> f64 {
    let Some(spectrum) = linalg::eigenvalues(jacobian) else {
        let l = linalg::spectral_norm(jacobian);
        let limit = 2.0 * linalg::lambda_min_sym(jacobian) / (alpha * beta * l * l);
        return (safety * limit.max(0.0)).min(1.0 / beta);
    };
    let limit = spectrum
        .into_iter()
        .filter(|&(re, _)| re > 0.0)
        .map(|(re, im)| 2.0 * re / (alpha * beta * (re * re + im * im)))
        .fold(f64::INFINITY, f64::min);
    (safety * limit).min(1.0 / beta)
}

/// [`stable_step`] for the field `cfg` integrates, ignoring `cfg.step`.
///
/// The projection makes the Euler map piecewise affine, so the limit is the
/// smallest over the regimes with no multiplier, every multiplier and each
/// single multiplier of the target clipped to zero.
pub fn auto_step(p: &ProblemSpec, lc: &LinearConstraints, cfg: &SolverConfig, safety: f64) -> Result<f64> {
    let probe = SolverConfig {
        step: 1.0 / cfg.beta,
        enforce_rate_bound: false,
        ..cfg.clone()
    };
    let solver = Solver::new(p, lc, probe)?;
    let (n, m) = (lc.n(), lc.m());
    let mut regimes = vec![vec![true; m]];
    regimes.extend((0..m).map(|i| (0..m).map(|j| j == i).collect::<Vec<bool>>()));
    let step = regimes
        .iter()
        .map(|clipped| {
            let jac = solver.field.regime_jacobian(n, clipped) / cfg.alpha;
            stable_step(&jac, cfg.alpha, cfg.beta, safety)
        })
        .fold(stable_step(solver.field_jacobian(), cfg.alpha, cfg.beta, safety), f64::min);
    Ok(step)
}

/// One kept iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `iter · s`.
    pub time: f64,
    pub z: PrimalDualPoint,
    /// `P[z − αĜ(z)]`.
    pub z_tilde: PrimalDualPoint,
    /// `‖z̃ − z‖∞`.
    pub fixed_point_residual: f64,
    /// Largest of the four KKT residuals.
    pub kkt_residual: f64,
    /// `V` (Euclidean) or `V₁` (natural gradient) against the reference.
    pub lyapunov: Option<f64>,
    /// `‖z − z*‖₂`.
    pub dist_to_ref: Option<f64>,
    /// `‖x − x*‖₂`.
    pub primal_dist: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    /// Negated slope of `ln ‖z − z*‖` against time.
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// Index of the last iterate.
    pub iterations: usize,
    pub final_z: PrimalDualPoint,
    pub step: f64,
    pub geometry: Option<NaturalGradientParams>,
    /// First iteration with `‖x − x*‖₂ ≤ milestone`.
    pub milestone_iter: Option<usize>,
    /// `c = √(2V₁(z(0)))`.
    pub envelope_constant: Option<f64>,
    pub fitted_rate: Option<RateFit>,
}

/// Affine field `Ĝ(z) = J z + offset` plus its projection.
#[derive(Debug, Clone)]
struct CompiledField {
    jacobian: DMatrix<f64>,
    /// `Aᵀ/k` for the metric projection.
    shift: Option<DMatrix<f64>>,
    /// `I − αJ` and `−α·offset`, so that `z − αĜ(z) = update·z + update_offset`.
    update: DMatrix<f64>,
    update_offset: DVector<f64>,
}

impl CompiledField {
    fn new(
        p: &ProblemSpec,
        lc: &LinearConstraints,
        variant: Variant,
        geom: Option<&NaturalGradientParams>,
        alpha: f64,
    ) -> Self {
        let a = lc.a();
        let g0 = p.linear_term();
        let (jacobian, offset, shift) = match (variant, geom) {
            (Variant::NaturalGradient, Some(geom)) => {
                let k = geom.k;
                let top = g0 * k + a.transpose() * lc.b();
                let bottom = a * g0 + lc.b() * k;
                (
                    geometry::natural_gradient_jacobian(p, lc, k),
                    linalg::stack(&top, &bottom),
                    Some(a.transpose() / k),
                )
            }
            _ => (gradient_map_jacobian(p, lc), linalg::stack(g0, lc.b()), None),
        };
        let dim = jacobian.nrows();
        Self {
            update: DMatrix::identity(dim, dim) - &jacobian * alpha,
            update_offset: &offset * -alpha,
            jacobian,
            shift,
        }
    }

    /// Jacobian of `z ↦ z − z̃` while the multipliers flagged in `clipped`
    /// are projected to zero.
    fn regime_jacobian(&self, n: usize, clipped: &[bool]) -> DMatrix<f64> {
        let mut d = self.update.clone();
        let zeroed: Vec<usize> = (0..clipped.len()).filter(|&i| clipped[i]).collect();
        if let Some(shift) = &self.shift {
            for &i in &zeroed {
                let row = self.update.row(n + i).clone_owned();
                let correction = shift.column(i) * row;
                let mut top = d.rows_mut(0, n);
                top -= correction;
            }
        }
        for &i in &zeroed {
            d.row_mut(n + i).fill(0.0);
        }
        DMatrix::identity(d.nrows(), d.ncols()) - d
    }

    fn target(&self, z: &DVector<f64>, n: usize, out: &mut DVector<f64>, clipped: &mut DVector<f64>) {
        out.copy_from(&self.update_offset);
        out.gemv(1.0, &self.update, z, 1.0);
        let mut any_clipped = false;
        for (c, v) in clipped.iter_mut().zip(out.rows_mut(n, z.len() - n).iter_mut()) {
            *c = v.min(0.0);
            if *v < 0.0 {
                *v = 0.0;
                any_clipped = true;
            }
        }
        if let (Some(shift), true) = (&self.shift, any_clipped) {
            // x ← x − (Aᵀ/k)·clipped
            out.rows_mut(0, n).gemv(-1.0, shift, clipped, 1.0);
        }
    }
}

/// A configured solver for one audited problem.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    problem: &'a ProblemSpec,
    constraints: &'a LinearConstraints,
    cfg: SolverConfig,
    geometry: Option<NaturalGradientParams>,
    metric: Option<MetricR>,
    field: CompiledField,
}

impl<'a> Solver<'a> {
    /// Validates the config, audits the problem and precomputes the field.
    pub fn new(p: &'a ProblemSpec, lc: &'a LinearConstraints, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        check_len("hessian dimension", lc.n(), p.dim())?;
        audit_assumptions(p, lc).require()?;
        let geometry = match cfg.variant {
            Variant::Euclidean => None,
            Variant::NaturalGradient => Some(NaturalGradientParams::from_multiplier(p, lc, cfg.k_multiplier)?),
        };
        if let (true, Some(g)) = (cfg.enforce_rate_bound, geometry.as_ref()) {
            if !(cfg.alpha < g.alpha_max) {
                return Err(invalid(
                    "alpha",
                    format!("{} is not below alpha_max = {:e}", cfg.alpha, g.alpha_max),
                ));
            }
        }
        let metric = geometry.as_ref().map(|g| geometry::build_metric(lc, g.k)).transpose()?;
        let field = CompiledField::new(p, lc, cfg.variant, geometry.as_ref(), cfg.alpha);
        Ok(Self {
            problem: p,
            constraints: lc,
            cfg,
            geometry,
            metric,
            field,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> Option<&NaturalGradientParams> {
        self.geometry.as_ref()
    }

    /// Jacobian of the (affine) field being integrated.
    pub fn field_jacobian(&self) -> &DMatrix<f64> {
        &self.field.jacobian
    }

    fn initial_point(&self) -> Result<PrimalDualPoint> {
        let (n, m) = (self.constraints.n(), self.constraints.m());
        match &self.cfg.start {
            Start::Origin => Ok(PrimalDualPoint::origin(n, m)),
            Start::Random { radius } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                let x = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-radius..=*radius)));
                let lambda = DVector::from_iterator(m, (0..m).map(|_| rng.random_range(0.0..=*radius)));
                PrimalDualPoint::new(x, lambda)
            }
            Start::Point(z) => {
                z.check_dims(n, m)?;
                PrimalDualPoint::new(z.x.clone(), z.lambda.clone())
            }
        }
    }

    /// Lyapunov value appropriate to the variant: `V₁` with the `R`
    /// semi-norm for the natural gradient, `V` otherwise.
    pub fn lyapunov(&self, z: &PrimalDualPoint, reference: &PrimalDualPoint) -> Result<f64> {
        lyapunov_value(
            self.problem,
            self.constraints,
            self.metric.as_ref(),
            z,
            reference,
            self.metric.is_some(),
        )
    }

    /// Integrates from the configured start. With a reference point the
    /// records carry distances and Lyapunov values.
    pub fn run(&self, reference: Option<&PrimalDualPoint>) -> Result<Trajectory> {
        let (p, lc, cfg) = (self.problem, self.constraints, &self.cfg);
        let n = lc.n();
        if let Some(r) = reference {
            r.check_dims(n, lc.m())?;
            verified_reference(p, lc, r)?;
        }
        let reference_stacked = reference.map(|r| r.stacked());
        let z0 = self.initial_point()?;
        let mut z = z0.stacked();
        let mut target = DVector::zeros(z.len());
        let mut clipped = DVector::zeros(lc.m());
        let weight = cfg.step * cfg.beta;

        let mut records = Vec::new();
        let mut converged = false;
        let mut milestone_iter = None;
        let mut last_iter = 0;

        for iter in 0..=cfg.max_iter {
            last_iter = iter;
            self.field.target(&z, n, &mut target, &mut clipped);
            let (residual, z_max, sum) = scan(&z, &target);
            if !sum.is_finite() {
                return Err(Error::Divergence {
                    iter,
                    reason: "non-finite state".into(),
                });
            }
            if z_max > DIVERGENCE_BOUND {
                return Err(Error::Divergence {
                    iter,
                    reason: format!("|z|_inf exceeded {DIVERGENCE_BOUND:e}"),
                });
            }
            if let (Some(r), None) = (reference, milestone_iter) {
                let sq: f64 = z.iter().zip(r.x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if sq.sqrt() <= cfg.milestone {
                    milestone_iter = Some(iter);
                }
            }
            converged = residual <= cfg.tol;
            let last = converged || iter == cfg.max_iter;
            if iter % cfg.stride == 0 || last {
                records.push(self.record(iter, &z, &target, residual, reference, reference_stacked.as_ref())?);
            }
            if last {
                break;
            }
            // z ← (1 − sβ)z + sβ·z̃
            z.axpy(weight, &target, 1.0 - weight);
        }

        let final_z = PrimalDualPoint::from_stacked_unchecked(&z, n);
        let envelope_constant = match (reference, self.metric.as_ref()) {
            (Some(r), Some(_)) => Some((2.0 * self.lyapunov(&z0, r)?).max(0.0).sqrt()),
            _ => None,
        };
        let mut traj = Trajectory {
            records,
            converged,
            iterations: last_iter,
            final_z,
            step: cfg.step,
            geometry: self.geometry.clone(),
            milestone_iter,
            envelope_constant,
            fitted_rate: None,
        };
        if let Some(r) = reference {
            traj.fitted_rate = estimate_rate(&traj, r).ok();
        }
        Ok(traj)
    }

    fn record(
        &self,
        iter: usize,
        z: &DVector<f64>,
        target: &DVector<f64>,
        residual: f64,
        reference: Option<&PrimalDualPoint>,
        reference_stacked: Option<&DVector<f64>>,
    ) -> Result<IterationRecord> {
        let n = self.constraints.n();
        let zp = PrimalDualPoint::from_stacked_unchecked(z, n);
        let kkt = verification::kkt_residuals(self.problem, self.constraints, &zp, self.cfg.tol)?;
        let (lyapunov, dist_to_ref, primal_dist) = match (reference, reference_stacked) {
            (Some(r), Some(rs)) => (
                Some(self.lyapunov(&zp, r)?),
                Some((z - rs).norm()),
                Some((&zp.x - &r.x).norm()),
            ),
            _ => (None, None, None),
        };
        Ok(IterationRecord {
            iter,
            time: iter as f64 * self.cfg.step,
            z_tilde: PrimalDualPoint::from_stacked_unchecked(target, n),
            z: zp,
            fixed_point_residual: residual,
            kkt_residual: kkt.max_residual(),
            lyapunov,
            dist_to_ref,
            primal_dist,
        })
    }
}

/// `(‖z̃ − z‖∞, ‖z‖∞, Σ z + Σ z̃)` in one pass; the sum is finite iff every
/// entry is.
fn scan(z: &DVector<f64>, target: &DVector<f64>) -> (f64, f64, f64) {
    let (mut residual, mut z_max, mut sum) = (0.0f64, 0.0f64, 0.0f64);
    for (&v, &t) in z.iter().zip(target.iter()) {
        let d = (t - v).abs();
        if d > residual {
            residual = d;
        }
        if v.abs() > z_max {
            z_max = v.abs();
        }
        sum += v + t;
    }
    (residual, z_max, sum)
}

/// Audits the problem and integrates the configured dynamics.
pub fn solve(p: &ProblemSpec, lc: &LinearConstraints, cfg: &SolverConfig) -> Result<Trajectory> {
    Solver::new(p, lc, cfg.clone())?.run(None)
}

/// Tolerance for accepting a Lyapunov reference point as a KKT point.
pub const REFERENCE_KKT_TOL: f64 = 1e-6;

fn verified_reference(p: &ProblemSpec, lc: &LinearConstraints, z_star: &PrimalDualPoint) -> Result<()> {
    let report = verification::kkt_residuals(p, lc, z_star, REFERENCE_KKT_TOL)?;
    if report.passed {
        Ok(())
    } else {
        Err(invalid(
            "z_star",
            format!("not a KKT point (max residual {:e})", report.max_residual()),
        ))
    }
}

/// `(L(x*,λ*) − L(x*,λ)) + (L(x,λ*) − L(x*,λ*)) + ½‖z − z*‖²`, where the
/// last norm is Euclidean or, with `weighted`, the `R` semi-norm.
pub fn lyapunov_value(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    metric: Option<&MetricR>,
    z: &PrimalDualPoint,
    z_star: &PrimalDualPoint,
    weighted: bool,
) -> Result<f64> {
    z.check_dims(lc.n(), lc.m())?;
    z_star.check_dims(lc.n(), lc.m())?;
    verified_reference(p, lc, z_star)?;
    let l_star = lagrangian(p, lc, &z_star.x, &z_star.lambda)?;
    let gap_dual = l_star - lagrangian(p, lc, &z_star.x, &z.lambda)?;
    let gap_primal = lagrangian(p, lc, &z.x, &z_star.lambda)? - l_star;
    let d = z.stacked() - z_star.stacked();
    let sq = if weighted {
        let metric = metric.ok_or_else(|| invalid("metric", "weighted Lyapunov value needs a metric"))?;
        geometry::r_inner(metric, &d, &d)?
    } else {
        d.norm_squared()
    };
    Ok(gap_dual + gap_primal + 0.5 * sq)
}

/// Least-squares fit of `ln ‖z − z*‖` against time over the records before
/// the distance first drops to `100·ε·max(1, ‖z*‖∞)`.
pub fn estimate_rate(traj: &Trajectory, reference: &PrimalDualPoint) -> Result<RateFit> {
    let floor = 100.0 * f64::EPSILON * reference.stacked().amax().max(1.0);
    estimate_rate_above(traj, reference, floor)
}

/// As [`estimate_rate`] with an explicit noise floor.
pub fn estimate_rate_above(traj: &Trajectory, reference: &PrimalDualPoint, floor: f64) -> Result<RateFit> {
    let r = reference.stacked();
    let series: Vec<(f64, f64)> = traj
        .records
        .iter()
        .map(|rec| (rec.time, (rec.z.stacked() - &r).norm()))
        .collect();
    fit_log_decay(&series, floor)
}

/// Fits `ln d ≈ a − rate·t` to the `(t, d)` pairs preceding the first
/// distance at or below `floor`.
pub fn fit_log_decay(series: &[(f64, f64)], floor: f64) -> Result<RateFit> {
    const MIN_POINTS: usize = 10;
    let pts: Vec<(f64, f64)> = series
        .iter()
        .take_while(|&&(_, d)| d > floor)
        .map(|&(t, d)| (t, d.ln()))
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            have: pts.len(),
        });
    }
    let (slope, r_squared) = linear_fit(&pts);
    Ok(RateFit {
        rate: -slope,
        r_squared,
        points: pts.len(),
    })
}

/// Ordinary least squares `y ≈ a + bt`; returns `(b, R²)`. A fit with no
/// variance in `y` has `R² = 1`.
fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in pts {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let ss_res: f64 = pts
        .iter()
        .map(|&(t, y)| {
            let e = y - (my + slope * (t - mt));
            e * e
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    (slope, r2)
}
