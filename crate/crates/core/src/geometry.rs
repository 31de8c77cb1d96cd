//! Metric geometry of the primal-dual state space: the block metric `R`,
//! the scaling parameter `k`, the natural-gradient map `G_r`, and the
//! horizontal/vertical tangent splitting.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;
use crate::problem::{LinearConstraints, PrimalDualPoint, ProblemSpec};

/// Multiplier applied to `ϱ` when no `k` is configured.
pub const DEFAULT_K_MULTIPLIER: f64 = 10.0;

/// Block metric `R = [[AᵀA, −Aᵀ], [−A, kI]]`.
///
/// `R` is symmetric and, for `k ≥ 1`, positive semidefinite: the Schur
/// complement of the `kI` block is `(1 − 1/k)AᵀA`. When `m < n` that
/// complement is singular, so `R` only induces a semi-inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricR {
    pub m11: DMatrix<f64>,
    pub m12: DMatrix<f64>,
    pub m21: DMatrix<f64>,
    pub m22: DMatrix<f64>,
    pub k: f64,
}

impl MetricR {
    pub fn n(&self) -> usize {
        self.m11.nrows()
    }

    pub fn m(&self) -> usize {
        self.m22.nrows()
    }

    /// The full `(n+m)×(n+m)` matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        linalg::block2(&self.m11, &self.m12, &self.m21, &self.m22)
    }

    /// `‖u‖_R = sqrt(uᵀRu)`, clamped at zero against roundoff.
    pub fn semi_norm(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(r_inner(self, u, u)?.max(0.0).sqrt())
    }
}

pub fn build_metric(lc: &LinearConstraints, k: f64) -> Result<MetricR> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(invalid("k", format!("must be positive, got {k}")));
    }
    let a = lc.a();
    let m = lc.m();
    Ok(MetricR {
        m11: a.transpose() * a,
        m12: -a.transpose(),
        m21: -a.clone(),
        m22: DMatrix::identity(m, m) * k,
        k,
    })
}

/// `uᵀRv`.
pub fn r_inner(metric: &MetricR, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let dim = metric.n() + metric.m();
    check_len("u", dim, u.len())?;
    check_len("v", dim, v.len())?;
    let (n, m) = (metric.n(), metric.m());
    let (ux, ul) = (u.rows(0, n), u.rows(n, m));
    let (vx, vl) = (v.rows(0, n), v.rows(n, m));
    Ok(ux.dot(&(&metric.m11 * vx + &metric.m12 * vl)) + ul.dot(&(&metric.m21 * vx + &metric.m22 * vl)))
}

/// `ϱ = max{√q2, λmax(AᵀAH⁻¹ + ½q1H⁻¹ + ½H)}`.
///
/// The inner matrix is not symmetric in general. It equals `S·H⁻¹` with
/// `S = AᵀA + ½q1I + ½H²`, which is similar to `L⁻¹SL⁻ᵀ` for `H = LLᵀ`, so
/// its spectrum is real and is read off that symmetric matrix. The result
/// is maxed with `λmax` of the symmetrized inner matrix.
pub fn compute_rho(p: &ProblemSpec, lc: &LinearConstraints) -> Result<f64> {
    check_len("hessian dimension", lc.n(), p.dim())?;
    let h = p.hessian();
    let chol = h.clone().cholesky().ok_or(Error::Singular("hessian"))?;
    let h_inv = chol.inverse();
    let a = lc.a();
    let ata = a.transpose() * a;
    let inner = &ata * &h_inv + &h_inv * (0.5 * lc.q1()) + h * 0.5;
    let s = ata + DMatrix::identity(lc.n(), lc.n()) * (0.5 * lc.q1()) + h * h * 0.5;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(lc.n(), lc.n()))
        .ok_or(Error::Singular("hessian"))?;
    let similar = &l_inv * s * l_inv.transpose();
    let spectral = linalg::lambda_max_sym(&similar).max(linalg::lambda_max_sym(&inner));
    Ok(lc.q2().sqrt().max(spectral))
}

/// `k = multiplier · ϱ`, which must exceed `ϱ` strictly.
pub fn choose_k(rho: f64, multiplier: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid("rho", format!("must be positive, got {rho}")));
    }
    if !(multiplier > 1.0 && multiplier.is_finite()) {
        return Err(invalid("k_multiplier", format!("must exceed 1, got {multiplier}")));
    }
    let k = multiplier * rho;
    if k <= rho {
        return Err(invalid("k_multiplier", format!("{multiplier} does not move k above rho = {rho}")));
    }
    Ok(k)
}

/// `G_r(z) = [k∇f − AᵀAx + kAᵀλ + Aᵀb ; A∇f − kAx + AAᵀλ + kb]`.
///
/// This is `[[kI, Aᵀ], [A, kI]] · G(z)` with `G` the descent-ascent
/// gradient map.
pub fn natural_gradient(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    k: f64,
    z: &PrimalDualPoint,
) -> Result<DVector<f64>> {
    z.check_dims(lc.n(), lc.m())?;
    check_len("hessian dimension", lc.n(), p.dim())?;
    let a = lc.a();
    let at = a.transpose();
    let grad = p.grad_objective(&z.x)?;
    let ax = a * &z.x;
    let top = &grad * k - &at * &ax + &at * &z.lambda * k + &at * lc.b();
    let bottom = a * &grad - ax * k + a * (&at * &z.lambda) + lc.b() * k;
    Ok(linalg::stack(&top, &bottom))
}

/// Constant Jacobian of [`natural_gradient`]:
/// `[[kH − AᵀA, kAᵀ], [AH − kA, AAᵀ]]`.
pub fn natural_gradient_jacobian(p: &ProblemSpec, lc: &LinearConstraints, k: f64) -> DMatrix<f64> {
    let a = lc.a();
    let h = p.hessian();
    let at = a.transpose();
    linalg::block2(
        &(h * k - &at * a),
        &(&at * k),
        &(a * h - a * k),
        &(a * &at),
    )
}

/// Constants that parametrize the natural-gradient flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaturalGradientParams {
    pub rho: f64,
    pub k: f64,
    /// Certified strong-monotonicity lower bound `q1/2`.
    pub nu_certified: f64,
    /// `λmin` of the symmetric part of `∇G_r`; the sharper modulus.
    pub nu: f64,
    /// `σmax(∇G_r)`, exact for the affine map.
    pub lipschitz: f64,
    /// `4ν / L²`.
    pub alpha_max: f64,
}

impl NaturalGradientParams {
    /// Parameters at an explicit `k`. `k` need not satisfy `k > ϱ`; see
    /// [`NaturalGradientParams::satisfies_k_rule`].
    pub fn with_k(p: &ProblemSpec, lc: &LinearConstraints, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid("k", format!("must be positive, got {k}")));
        }
        let rho = compute_rho(p, lc)?;
        let jac = natural_gradient_jacobian(p, lc, k);
        let nu = linalg::lambda_min_sym(&jac);
        let lipschitz = linalg::spectral_norm(&jac);
        Ok(Self {
            rho,
            k,
            nu_certified: 0.5 * lc.q1(),
            nu,
            lipschitz,
            alpha_max: 4.0 * nu / (lipschitz * lipschitz),
        })
    }

    /// Parameters at `k = multiplier · ϱ`.
    pub fn from_multiplier(p: &ProblemSpec, lc: &LinearConstraints, multiplier: f64) -> Result<Self> {
        let rho = compute_rho(p, lc)?;
        let k = choose_k(rho, multiplier)?;
        Self::with_k(p, lc, k)
    }

    pub fn satisfies_k_rule(&self) -> bool {
        self.k > self.rho
    }

    /// Decay rate `αβ(4ν − αL²)/8` of the exponential envelope.
    pub fn envelope_rate(&self, alpha: f64, beta: f64) -> f64 {
        alpha * beta * (4.0 * self.nu - alpha * self.lipschitz * self.lipschitz) / 8.0
    }
}

/// Horizontal and vertical parts of a tangent vector `(ẋ, λ̇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSplit {
    /// `(ẋ, −m22⁻¹m21ẋ)`.
    pub horizontal: DVector<f64>,
    /// `(0, λ̇ + m22⁻¹m21ẋ)`.
    pub vertical: DVector<f64>,
}

pub fn split_tangent(metric: &MetricR, xdot: &DVector<f64>, lambdadot: &DVector<f64>) -> Result<TangentSplit> {
    check_len("xdot", metric.n(), xdot.len())?;
    check_len("lambdadot", metric.m(), lambdadot.len())?;
    if !(metric.k > 0.0) {
        return Err(invalid("k", "m22 = kI is singular"));
    }
    let leak = vertical_leakage(metric, xdot)?;
    let horizontal = linalg::stack(xdot, &(-&leak));
    let vertical = linalg::stack(&DVector::zeros(metric.n()), &(lambdadot + &leak));
    Ok(TangentSplit { horizontal, vertical })
}

/// `m22⁻¹m21ẋ`, the vertical component carried by the horizontal lift.
pub fn vertical_leakage(metric: &MetricR, xdot: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("xdot", metric.n(), xdot.len())?;
    let lu = metric.m22.clone().lu();
    lu.solve(&(&metric.m21 * xdot)).ok_or(Error::Singular("m22"))
}

/// `Q(x, λ) = λ − (Ax − b)`; zero on the constraint surface.
pub fn manifold_residual(lc: &LinearConstraints, z: &PrimalDualPoint) -> Result<DVector<f64>> {
    z.check_dims(lc.n(), lc.m())?;
    Ok(&z.lambda - lc.eval_constraints(&z.x)?)
}

/// Primal flow restricted to the constraint surface: `−∇f(x) − Aᵀ(Ax − b)`.
pub fn reduced_primal_rhs(p: &ProblemSpec, lc: &LinearConstraints, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("x", lc.n(), x.len())?;
    Ok(-p.grad_objective(x)? - lc.a().transpose() * lc.eval_constraints(x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::canonical;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn metric_for_scalar_constraint() {
        let (_, lc) = canonical();
        let r = build_metric(&lc, 2.0).unwrap();
        assert_eq!(r.assemble(), DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]));
        let r1 = build_metric(&lc, 1.0).unwrap().assemble();
        assert_eq!(r1, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(build_metric(&lc, 0.0).is_err());
        assert!(build_metric(&lc, -1.0).is_err());
    }

    #[test]
    fn metric_at_unit_k_is_singular_when_underdetermined() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0]);
        let lc = LinearConstraints::new(a, v(&[0.0, 0.0])).unwrap();
        let r = build_metric(&lc, 1.0).unwrap().assemble();
        assert_abs_diff_eq!(linalg::lambda_min_sym(&r), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn rho_for_canonical_and_scaled_hessian() {
        let (p, lc) = canonical();
        assert_abs_diff_eq!(compute_rho(&p, &lc).unwrap(), 1.75, epsilon = 1e-12);
        let p20 = ProblemSpec::quadratic(DMatrix::from_element(1, 1, 20.0), v(&[0.0])).unwrap();
        // 1/20 + 1/40 + 10
        assert_abs_diff_eq!(compute_rho(&p20, &lc).unwrap(), 10.075, epsilon = 1e-12);
    }

    #[test]
    fn rho_is_row_permutation_invariant() {
        let p = ProblemSpec::quadratic(DMatrix::identity(3, 3) * 2.0, DVector::zeros(3)).unwrap();
        let id = LinearConstraints::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let perm = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 0., 0., 1., 1., 0., 0.]);
        let lp = LinearConstraints::new(perm, DVector::zeros(3)).unwrap();
        assert_abs_diff_eq!(compute_rho(&p, &id).unwrap(), compute_rho(&p, &lp).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn choose_k_rules() {
        assert_abs_diff_eq!(choose_k(1.75, 10.0).unwrap(), 17.5, epsilon = 1e-12);
        let k = choose_k(1.75, 1.0001).unwrap();
        assert!(k > 1.75);
        assert!(choose_k(1.75, 1.0).is_err());
        assert!(choose_k(1.75, 0.5).is_err());
        assert_abs_diff_eq!(choose_k(2.0, 1000.0).unwrap(), 2000.0);
    }

    #[test]
    fn natural_gradient_hand_values() {
        let (p, lc) = canonical();
        let z0 = PrimalDualPoint::from_slices(&[0.0], &[0.0]).unwrap();
        assert_eq!(natural_gradient(&p, &lc, 2.0, &z0).unwrap(), v(&[1.0, -2.0]));
        let zs = PrimalDualPoint::from_slices(&[1.0], &[2.0]).unwrap();
        assert_eq!(natural_gradient(&p, &lc, 2.0, &zs).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn natural_gradient_equals_premultiplied_gradient() {
        let (p, lc) = crate::fixtures::small_random(3, 5, 11);
        let k = 4.0;
        let z = PrimalDualPoint::from_slices(&[0.3, -1.0, 2.0, 0.0, 1.5], &[0.2, 0.0, 1.0]).unwrap();
        let a = lc.a();
        let t = linalg::block2(
            &(DMatrix::identity(5, 5) * k),
            &a.transpose(),
            a,
            &(DMatrix::identity(3, 3) * k),
        );
        let g = crate::dynamics::gradient_map(&p, &lc, &z).unwrap();
        let gr = natural_gradient(&p, &lc, k, &z).unwrap();
        assert!((t * g - gr).amax() < 1e-12);
    }

    #[test]
    fn r_inner_values() {
        let (_, lc) = canonical();
        let r = build_metric(&lc, 2.0).unwrap();
        assert_eq!(r_inner(&r, &v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(r_inner(&r, &v(&[0.0, 0.0]), &v(&[3.0, -7.0])).unwrap(), 0.0);
        assert!(r_inner(&r, &v(&[1.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn split_tangent_hand_values() {
        let (_, lc) = canonical();
        let r = build_metric(&lc, 2.0).unwrap();
        let s = split_tangent(&r, &v(&[2.0]), &v(&[0.0])).unwrap();
        assert_eq!(s.horizontal, v(&[2.0, -1.0]));
        assert_eq!(s.vertical, v(&[0.0, 1.0]));
        assert_eq!(r_inner(&r, &s.horizontal, &s.vertical).unwrap(), 0.0);

        let s = split_tangent(&r, &v(&[0.0]), &v(&[3.0])).unwrap();
        assert_eq!(s.horizontal, v(&[0.0, 0.0]));
        assert_eq!(s.vertical, v(&[0.0, 3.0]));
    }

    #[test]
    fn manifold_residual_hand_values() {
        let (_, lc) = canonical();
        let on = |x: f64, l: f64| {
            manifold_residual(&lc, &PrimalDualPoint::from_slices(&[x], &[l]).unwrap()).unwrap()[0]
        };
        assert_eq!(on(1.0, 0.0), 0.0);
        assert_eq!(on(0.0, 1.0), 0.0);
        assert_eq!(on(0.0, 0.0), -1.0);
    }

    #[test]
    fn reduced_rhs_hand_value_and_equilibrium() {
        let (p, lc) = canonical();
        assert_eq!(reduced_primal_rhs(&p, &lc, &v(&[1.0])).unwrap(), v(&[-2.0]));
        // (H + AᵀA)x̄ = Aᵀb − c → 3x̄ = 1
        let xbar = v(&[1.0 / 3.0]);
        assert!(reduced_primal_rhs(&p, &lc, &xbar).unwrap().amax() < 1e-15);
    }

    #[test]
    fn krasovskii_value_decreases_along_euler() {
        let (p, lc) = canonical();
        let mut x = v(&[5.0]);
        let mut prev = f64::INFINITY;
        for _ in 0..5000 {
            let xdot = reduced_primal_rhs(&p, &lc, &x).unwrap();
            let val = 0.5 * xdot.norm_squared();
            assert!(val < prev || val == 0.0);
            prev = val;
            x += xdot * 1e-3;
        }
    }

    #[test]
    fn params_for_canonical_problem() {
        let (p, lc) = canonical();
        let g = NaturalGradientParams::with_k(&p, &lc, 2.0).unwrap();
        assert_abs_diff_eq!(g.nu, 2.0 - 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(g.nu_certified, 0.5);
        assert!(g.satisfies_k_rule());
        assert_eq!(g.alpha_max, 4.0 * g.nu / (g.lipschitz * g.lipschitz));
        let g10 = NaturalGradientParams::from_multiplier(&p, &lc, DEFAULT_K_MULTIPLIER).unwrap();
        assert_abs_diff_eq!(g10.k, 17.5, epsilon = 1e-12);
        assert!(g10.nu >= g10.nu_certified - 1e-10);
    }
}
