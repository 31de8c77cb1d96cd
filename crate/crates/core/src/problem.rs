//! Problem data: the strongly convex objective, the linear inequality
//! constraints `Ax − b ≤ 0`, the stacked primal-dual state, and the
//! assumption audit that gates every solver.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;

/// Maximum relative asymmetry tolerated in a user-supplied Hessian.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Strict-feasibility margin a Slater point must clear.
pub const SLATER_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    RegularizedLeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    /// `½ xᵀHx + cᵀx`
    Quadratic { c: DVector<f64> },
    /// `‖Cx − d‖² + (θ/2)‖x‖²`
    RegularizedLeastSquares {
        c_mat: DMatrix<f64>,
        d: DVector<f64>,
        theta: f64,
    },
}

/// A strongly convex objective with constant Hessian.
///
/// Both supported families have `∇f(x) = Hx + g₀` for a constant vector
/// `g₀`, which [`ProblemSpec::linear_term`] exposes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    objective: Objective,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    mu: f64,
}

impl ProblemSpec {
    /// `f(x) = ½ xᵀHx + cᵀx`. The Hessian must be square and symmetric; its
    /// definiteness is checked by [`audit_assumptions`], not here.
    pub fn quadratic(hessian: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let n = hessian.nrows();
        check_len("hessian columns", n, hessian.ncols())?;
        check_len("linear term", n, c.len())?;
        if n == 0 {
            return Err(invalid("hessian", "empty problem"));
        }
        if !hessian.iter().chain(c.iter()).all(|v| v.is_finite()) {
            return Err(invalid("hessian", "non-finite entry"));
        }
        let asym = linalg::relative_asymmetry(&hessian);
        if asym > SYMMETRY_TOL {
            return Err(invalid("hessian", format!("not symmetric (relative asymmetry {asym:e})")));
        }
        let hessian = linalg::sym_part(&hessian);
        let mu = linalg::lambda_min_sym(&hessian);
        Ok(Self {
            objective: Objective::Quadratic { c: c.clone() },
            hessian,
            linear: c,
            mu,
        })
    }

    /// `f(x) = ‖Cx − d‖² + (θ/2)‖x‖²`, with Hessian `2CᵀC + θI`.
    pub fn regularized_least_squares(c_mat: DMatrix<f64>, d: DVector<f64>, theta: f64) -> Result<Self> {
        check_len("target vector d", c_mat.nrows(), d.len())?;
        let n = c_mat.ncols();
        if n == 0 {
            return Err(invalid("C", "empty problem"));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(invalid("theta", format!("must be positive, got {theta}")));
        }
        let ctc = c_mat.transpose() * &c_mat;
        let hessian = linalg::sym_part(&(ctc * 2.0 + DMatrix::identity(n, n) * theta));
        let linear = -(c_mat.transpose() * &d) * 2.0;
        let mu = linalg::lambda_min_sym(&hessian);
        Ok(Self {
            objective: Objective::RegularizedLeastSquares { c_mat, d, theta },
            hessian,
            linear,
            mu,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        match self.objective {
            Objective::Quadratic { .. } => ObjectiveKind::Quadratic,
            Objective::RegularizedLeastSquares { .. } => ObjectiveKind::RegularizedLeastSquares,
        }
    }

    /// Number of primal variables.
    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// The constant `g₀` in `∇f(x) = Hx + g₀`.
    pub fn linear_term(&self) -> &DVector<f64> {
        &self.linear
    }

    /// Smallest Hessian eigenvalue, the strong-convexity modulus.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn theta(&self) -> Option<f64> {
        match self.objective {
            Objective::RegularizedLeastSquares { theta, .. } => Some(theta),
            Objective::Quadratic { .. } => None,
        }
    }

    pub fn eval_objective(&self, x: &DVector<f64>) -> Result<f64> {
        check_len("x", self.dim(), x.len())?;
        Ok(match &self.objective {
            Objective::Quadratic { c } => 0.5 * x.dot(&(&self.hessian * x)) + c.dot(x),
            Objective::RegularizedLeastSquares { c_mat, d, theta } => {
                let r = c_mat * x - d;
                r.norm_squared() + 0.5 * theta * x.norm_squared()
            }
        })
    }

    pub fn grad_objective(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("x", self.dim(), x.len())?;
        Ok(match &self.objective {
            Objective::Quadratic { c } => &self.hessian * x + c,
            Objective::RegularizedLeastSquares { c_mat, d, theta } => {
                c_mat.transpose() * (c_mat * x - d) * 2.0 + x * *theta
            }
        })
    }
}

/// Linear constraints `g(x) = Ax − b ≤ 0` together with the spectral bounds
/// `q1 = λmin(AAᵀ)` and `q2 = λmax(AAᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraints {
    a: DMatrix<f64>,
    b: DVector<f64>,
    q1: f64,
    q2: f64,
}

impl LinearConstraints {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len("constraint vector b", a.nrows(), b.len())?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(invalid("A", "constraint matrix must be non-empty"));
        }
        if !a.iter().chain(b.iter()).all(|v| v.is_finite()) {
            return Err(invalid("A", "non-finite entry"));
        }
        let gram = &a * a.transpose();
        let ev = linalg::sym_eigenvalues(&gram);
        let q1 = ev[0];
        let q2 = ev[ev.len() - 1];
        Ok(Self { a, b, q1, q2 })
    }

    /// Number of constraints.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Number of primal variables.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn q1(&self) -> f64 {
        self.q1
    }

    pub fn q2(&self) -> f64 {
        self.q2
    }

    pub fn eval_constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("x", self.n(), x.len())?;
        Ok(&self.a * x - &self.b)
    }

    /// Same problem with `b` replaced.
    pub fn with_b(&self, b: DVector<f64>) -> Result<Self> {
        check_len("constraint vector b", self.m(), b.len())?;
        Ok(Self {
            a: self.a.clone(),
            b,
            q1: self.q1,
            q2: self.q2,
        })
    }
}

/// The stacked state `z = (x, λ)` with `λ ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualPoint {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
}

impl PrimalDualPoint {
    /// Builds a point, rejecting negative multipliers.
    pub fn new(x: DVector<f64>, lambda: DVector<f64>) -> Result<Self> {
        if let Some((i, v)) = lambda.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(invalid("lambda", format!("component {i} is {v}, must be >= 0")));
        }
        Ok(Self { x, lambda })
    }

    /// Builds a point without checking `λ ≥ 0`, for residual diagnostics on
    /// infeasible inputs.
    pub fn new_unchecked(x: DVector<f64>, lambda: DVector<f64>) -> Self {
        Self { x, lambda }
    }

    pub fn origin(n: usize, m: usize) -> Self {
        Self {
            x: DVector::zeros(n),
            lambda: DVector::zeros(m),
        }
    }

    pub fn from_slices(x: &[f64], lambda: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x), DVector::from_column_slice(lambda))
    }

    /// Splits an `(n+m)`-vector at `n` without any projection.
    pub fn from_stacked_unchecked(z: &DVector<f64>, n: usize) -> Self {
        let m = z.len() - n;
        Self {
            x: z.rows(0, n).into_owned(),
            lambda: z.rows(n, m).into_owned(),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        linalg::stack(&self.x, &self.lambda)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(self.lambda.iter()).all(|v| v.is_finite())
    }

    pub(crate) fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        check_len("x", n, self.x.len())?;
        check_len("lambda", m, self.lambda.len())
    }
}

/// Lagrangian `L(x, λ) = f(x) + λᵀ(Ax − b)`.
pub fn lagrangian(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64> {
    check_len("lambda", lc.m(), lambda.len())?;
    Ok(p.eval_objective(x)? + lambda.dot(&lc.eval_constraints(x)?))
}

/// Outcome of checking strong convexity, constraint regularity and strict
/// feasibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub n: usize,
    pub m: usize,
    /// `λmin(H)`.
    pub mu: f64,
    pub strongly_convex: bool,
    pub q1: f64,
    pub q2: f64,
    pub rank: usize,
    pub full_row_rank: bool,
    /// A strictly feasible point, when the search found one.
    pub slater_point: Option<Vec<f64>>,
    /// `max_i g_i` at the returned Slater candidate.
    pub slater_max_constraint: f64,
    pub slater_found: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.strongly_convex && self.full_row_rank && self.slater_found
    }

    /// Converts a failing report into an error naming the failed checks.
    pub fn require(&self) -> Result<()> {
        if self.passed() {
            return Ok(());
        }
        let mut failed = Vec::new();
        if !self.strongly_convex {
            failed.push(format!("strong convexity (lambda_min(H) = {:e})", self.mu));
        }
        if !self.full_row_rank {
            failed.push(format!("full row rank (rank {} of {} rows, n = {})", self.rank, self.m, self.n));
        }
        if !self.slater_found {
            failed.push("strict feasibility (no Slater point found)".to_string());
        }
        Err(Error::AuditFailed(failed.join("; ")))
    }
}

/// Audits strong convexity, full row rank with `m ≤ n`, and strict
/// feasibility of the constraint set.
pub fn audit_assumptions(p: &ProblemSpec, lc: &LinearConstraints) -> AssumptionReport {
    let (m, n) = (lc.m(), lc.n());
    let mu = p.mu();
    let dims_ok = p.dim() == n;
    let rank = linalg::numerical_rank(lc.a());
    let full_row_rank = m <= n && rank == m;
    let slater = if dims_ok { find_slater_point(lc) } else { None };
    let slater_max_constraint = slater
        .as_ref()
        .map(|x| lc.eval_constraints(x).map(|g| g.max()).unwrap_or(f64::NAN))
        .unwrap_or(f64::NAN);
    let slater_found = slater.is_some();
    AssumptionReport {
        n,
        m,
        mu,
        strongly_convex: dims_ok && mu > 0.0,
        q1: lc.q1(),
        q2: lc.q2(),
        rank,
        full_row_rank,
        slater_point: slater.map(|x| x.iter().copied().collect()),
        slater_max_constraint,
        slater_found,
    }
}

const SLATER_TARGET: f64 = -1.0;
const SLATER_MAX_ITER: usize = 100_000;
const SLATER_BOX: f64 = 1e8;

/// Minimizes the log-sum-exp surrogate of `max_i g_i(x)` by projected
/// gradient descent over a large box, stopping once every constraint is at
/// most `-1`. Returns the iterate if it is strictly feasible.
fn find_slater_point(lc: &LinearConstraints) -> Option<DVector<f64>> {
    let a = lc.a();
    let norm2 = linalg::spectral_norm(a).powi(2);
    if norm2 == 0.0 {
        return None;
    }
    let step = 1.0 / norm2;
    let mut x = DVector::zeros(lc.n());
    for _ in 0..SLATER_MAX_ITER {
        let g = a * &x - lc.b();
        let gmax = g.max();
        if gmax <= SLATER_TARGET {
            break;
        }
        // softmax weights of the surrogate
        let mut w = g.map(|v| (v - gmax).exp());
        let total = w.sum();
        w /= total;
        x -= a.transpose() * w * step;
        x.apply(|v| *v = v.clamp(-SLATER_BOX, SLATER_BOX));
    }
    let g = lc.eval_constraints(&x).ok()?;
    (g.max() < -SLATER_MARGIN).then_some(x)
}
