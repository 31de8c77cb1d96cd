//! Certificates and oracles: KKT residuals, the monotonicity and strong
//! monotonicity certificates, a brute-force active-set reference solver,
//! and diagnostics of the metric rescaling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{gradient_map, gradient_map_jacobian, project_omega, SolverConfig};
use crate::error::{invalid, Error, Result};
use crate::geometry::{self, natural_gradient, natural_gradient_jacobian, NaturalGradientParams};
use crate::linalg;
use crate::problem::{LinearConstraints, PrimalDualPoint, ProblemSpec};

/// PSD claims tolerate eigenvalues down to this value.
pub const PSD_TOL: f64 = 1e-10;
/// Strong-monotonicity claims tolerate this shortfall below `q1/2`.
pub const STRONG_TOL: f64 = 1e-8;
/// Largest `m` handled by exhaustive active-set enumeration.
pub const MAX_ENUMERATION_ROWS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// `max_i max(g_i(x), 0)`.
    pub primal_feasibility: f64,
    /// `max_i max(−λ_i, 0)`.
    pub dual_feasibility: f64,
    /// `max_i |λ_i g_i(x)|`.
    pub complementarity: f64,
    /// `‖∇f(x) + Aᵀλ‖∞`.
    pub stationarity: f64,
    pub tol: f64,
    pub passed: bool,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal_feasibility
            .max(self.dual_feasibility)
            .max(self.complementarity)
            .max(self.stationarity)
    }
}

pub fn kkt_residuals(p: &ProblemSpec, lc: &LinearConstraints, z: &PrimalDualPoint, tol: f64) -> Result<KktReport> {
    z.check_dims(lc.n(), lc.m())?;
    let g = lc.eval_constraints(&z.x)?;
    let primal_feasibility = g.iter().fold(0.0_f64, |acc, v| acc.max(*v));
    let dual_feasibility = z.lambda.iter().fold(0.0_f64, |acc, v| acc.max(-*v));
    let complementarity = g
        .iter()
        .zip(z.lambda.iter())
        .fold(0.0_f64, |acc, (gi, li)| acc.max((gi * li).abs()));
    let stationarity = (p.grad_objective(&z.x)? + lc.a().transpose() * &z.lambda).amax();
    let mut report = KktReport {
        primal_feasibility,
        dual_feasibility,
        complementarity,
        stationarity,
        tol,
        passed: false,
    };
    report.passed = report.max_residual() <= tol;
    Ok(report)
}

/// Solves the problem independently of the dynamics.
///
/// For `m ≤ 20` every active set `S` is tried: the equality system
/// `Hx + g₀ + A_Sᵀλ_S = 0, A_S x = b_S` is solved and kept when `λ_S ≥ 0`
/// and `Ax ≤ b` hold to `1e-9`. The surviving points must agree. Larger
/// problems integrate the projected dual gradient flow to stationarity and
/// then re-solve the equality system on the detected active set.
pub fn reference_solve(p: &ProblemSpec, lc: &LinearConstraints) -> Result<PrimalDualPoint> {
    if p.dim() != lc.n() {
        return Err(Error::DimensionMismatch {
            what: "hessian dimension",
            expected: lc.n(),
            got: p.dim(),
        });
    }
    if lc.m() <= MAX_ENUMERATION_ROWS {
        enumerate_active_sets(p, lc)
    } else {
        dual_flow_solve(p, lc)
    }
}

fn feasibility_tol(lc: &LinearConstraints) -> f64 {
    1e-9 * (1.0 + lc.b().amax())
}

/// Solves the equality-constrained stationarity system on `active`.
fn solve_active_set(p: &ProblemSpec, lc: &LinearConstraints, active: &[usize]) -> Option<PrimalDualPoint> {
    let (n, m, s) = (lc.n(), lc.m(), active.len());
    let a_s = lc.a().select_rows(active);
    let kkt = linalg::block2(p.hessian(), &a_s.transpose(), &a_s, &DMatrix::zeros(s, s));
    let rhs = linalg::stack(&(-p.linear_term()), &lc.b().select_rows(active));
    let sol = kkt.lu().solve(&rhs)?;
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    let mut lambda = DVector::zeros(m);
    for (j, &i) in active.iter().enumerate() {
        lambda[i] = sol[n + j];
    }
    Some(PrimalDualPoint::new_unchecked(sol.rows(0, n).into_owned(), lambda))
}

fn accept(lc: &LinearConstraints, z: &PrimalDualPoint) -> Option<PrimalDualPoint> {
    let tol = feasibility_tol(lc);
    let g = lc.eval_constraints(&z.x).ok()?;
    let ok = z.lambda.iter().all(|l| *l >= -tol) && g.iter().all(|gi| *gi <= tol);
    ok.then(|| PrimalDualPoint::new_unchecked(z.x.clone(), z.lambda.map(|l| l.max(0.0))))
}

fn enumerate_active_sets(p: &ProblemSpec, lc: &LinearConstraints) -> Result<PrimalDualPoint> {
    let m = lc.m();
    let mut found: Option<PrimalDualPoint> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let Some(candidate) = solve_active_set(p, lc, &active).and_then(|z| accept(lc, &z)) else {
            continue;
        };
        match &found {
            None => found = Some(candidate),
            Some(first) => {
                let scale = 1.0 + first.stacked().amax();
                let gap = (first.stacked() - candidate.stacked()).amax();
                if gap > 1e-6 * scale {
                    return Err(Error::Oracle(format!(
                        "active sets disagree by {gap:e}; problem is not strongly convex with full row rank"
                    )));
                }
            }
        }
    }
    found.ok_or_else(|| Error::Oracle("no active set yields a KKT point".into()))
}

fn dual_flow_solve(p: &ProblemSpec, lc: &LinearConstraints) -> Result<PrimalDualPoint> {
    const MAX_ITER: usize = 5_000_000;
    let a = lc.a();
    let h_chol = p
        .hessian()
        .clone()
        .cholesky()
        .ok_or(Error::Singular("hessian"))?;
    // λ ↦ Ax(λ) − b with x(λ) = −H⁻¹(g₀ + Aᵀλ) is affine: −Mλ − w
    let h_inv_at = h_chol.solve(&a.transpose());
    let dual_hessian = a * &h_inv_at;
    let x0 = -h_chol.solve(p.linear_term());
    let w = lc.b() - a * &x0;
    let lmax = linalg::lambda_max_sym(&dual_hessian);
    if !(lmax > 0.0) {
        return Err(Error::Singular("A H^-1 A^T"));
    }
    let step = 1.0 / lmax;
    let mut lambda = DVector::<f64>::zeros(lc.m());
    let mut grad = DVector::zeros(lc.m());
    for _ in 0..MAX_ITER {
        grad.copy_from(&w);
        grad.gemv(-1.0, &dual_hessian, &lambda, -1.0);
        let next = (&lambda + &grad * step).map(|v| v.max(0.0));
        let change = (&next - &lambda).amax();
        lambda = next;
        if change <= 1e-15 * (1.0 + lambda.amax()) {
            break;
        }
    }
    let x = &x0 - &h_inv_at * &lambda;
    let flowed = PrimalDualPoint::new_unchecked(x, lambda);

    // polish on the detected active set
    let threshold = 1e-9 * (1.0 + flowed.lambda.amax());
    let active: Vec<usize> = (0..lc.m()).filter(|&i| flowed.lambda[i] > threshold).collect();
    if let Some(polished) = solve_active_set(p, lc, &active).and_then(|z| accept(lc, &z)) {
        return Ok(polished);
    }
    let report = kkt_residuals(p, lc, &flowed, 1e-8)?;
    if report.passed {
        Ok(flowed)
    } else {
        Err(Error::Oracle(format!(
            "dual flow stalled with KKT residual {:e}",
            report.max_residual()
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityCertificate {
    pub k: f64,
    pub rho: f64,
    pub k_satisfies_rule: bool,
    /// `λmin` of the symmetric part of `[[H, Aᵀ], [−A, 0]]`.
    pub lambda_min_sym_g: f64,
    /// `λmin` of the symmetric part of `[[kH − AᵀA, kAᵀ], [AH − kA, AAᵀ]]`.
    pub lambda_min_sym_gr: f64,
    /// `q1/2`.
    pub nu_certified: f64,
    /// `λmin(2kH − 2AᵀA − q1I − (AH)ᵀ(AAᵀ)⁻¹(AH))`.
    pub schur_min_eig: f64,
    pub passed_lemma1: bool,
    pub passed_prop1: bool,
}

pub fn certify_monotonicity(p: &ProblemSpec, lc: &LinearConstraints, k: f64) -> Result<MonotonicityCertificate> {
    let params = NaturalGradientParams::with_k(p, lc, k)?;
    let a = lc.a();
    let h = p.hessian();
    let lambda_min_sym_g = linalg::lambda_min_sym(&gradient_map_jacobian(p, lc));
    let lambda_min_sym_gr = linalg::lambda_min_sym(&natural_gradient_jacobian(p, lc, k));

    let gram = a * a.transpose();
    let gram_chol = gram.cholesky().ok_or(Error::Singular("A A^T"))?;
    let ah = a * h;
    let n = lc.n();
    let schur = h * (2.0 * k)
        - a.transpose() * a * 2.0
        - DMatrix::identity(n, n) * lc.q1()
        - ah.transpose() * gram_chol.solve(&ah);
    let schur_min_eig = linalg::lambda_min_sym(&schur);

    let nu_certified = 0.5 * lc.q1();
    Ok(MonotonicityCertificate {
        k,
        rho: params.rho,
        k_satisfies_rule: params.satisfies_k_rule(),
        lambda_min_sym_g,
        lambda_min_sym_gr,
        nu_certified,
        schur_min_eig,
        passed_lemma1: lambda_min_sym_g >= -PSD_TOL,
        passed_prop1: lambda_min_sym_gr >= nu_certified - STRONG_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicitySample {
    /// `min ⟨ΔG_r, Δz⟩ / ‖Δz‖²`.
    pub euclidean_ratio: f64,
    /// `min ⟨ΔG_r, Δz⟩_R / ‖Δz‖²_R` over pairs with nonzero `R` norm.
    pub metric_ratio: f64,
    pub pairs: usize,
    pub metric_pairs: usize,
}

fn random_point(rng: &mut ChaCha8Rng, n: usize, m: usize) -> PrimalDualPoint {
    let x = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-10.0..=10.0)));
    let lambda = DVector::from_iterator(m, (0..m).map(|_| rng.random_range(0.0..=10.0)));
    PrimalDualPoint::new_unchecked(x, lambda)
}

/// Empirical strong-monotonicity ratios of `G_r` over seeded random pairs
/// in `Ω` (`x ∈ [−10, 10]ⁿ`, `λ ∈ [0, 10]ᵐ`). Coincident pairs are skipped.
pub fn sample_monotonicity(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    geom: &NaturalGradientParams,
    n_pairs: usize,
    seed: u64,
) -> Result<MonotonicitySample> {
    if n_pairs == 0 {
        return Err(invalid("n_pairs", "must be at least 1"));
    }
    let metric = geometry::build_metric(lc, geom.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut euclidean_ratio, mut metric_ratio) = (f64::INFINITY, f64::INFINITY);
    let (mut pairs, mut metric_pairs) = (0, 0);
    for _ in 0..n_pairs {
        let z1 = random_point(&mut rng, lc.n(), lc.m());
        let z2 = random_point(&mut rng, lc.n(), lc.m());
        let dz = z1.stacked() - z2.stacked();
        let dz2 = dz.norm_squared();
        if dz2 == 0.0 {
            continue;
        }
        let dg = natural_gradient(p, lc, geom.k, &z1)? - natural_gradient(p, lc, geom.k, &z2)?;
        euclidean_ratio = euclidean_ratio.min(dg.dot(&dz) / dz2);
        pairs += 1;
        let dz_r = geometry::r_inner(&metric, &dz, &dz)?;
        if dz_r > 1e-12 * dz2 {
            metric_ratio = metric_ratio.min(geometry::r_inner(&metric, &dg, &dz)? / dz_r);
            metric_pairs += 1;
        }
    }
    Ok(MonotonicitySample {
        euclidean_ratio,
        metric_ratio,
        pairs,
        metric_pairs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConsistency {
    /// Explicit `G_r(z)`.
    pub newgrad: DVector<f64>,
    /// Least-squares solution of `R y = G(z)`.
    pub pseudoinverse: DVector<f64>,
    /// `‖newgrad − pseudoinverse‖₂`.
    pub discrepancy: f64,
}

/// Compares the explicit natural gradient with `R⁺G(z)` for the block
/// metric `R`. The two differ in general.
pub fn diagnose_metric_consistency(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    k: f64,
    z: &PrimalDualPoint,
) -> Result<MetricConsistency> {
    let newgrad = natural_gradient(p, lc, k, z)?;
    let g = gradient_map(p, lc, z)?;
    let r = geometry::build_metric(lc, k)?.assemble();
    let svd = r.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    let pseudoinverse = svd.solve(&g, eps).map_err(|e| Error::Oracle(e.to_string()))?;
    let discrepancy = (&newgrad - &pseudoinverse).norm();
    Ok(MetricConsistency {
        newgrad,
        pseudoinverse,
        discrepancy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViCheck {
    /// `‖P[z − αG(z)] − z‖₂`.
    pub fixed_point_residual: f64,
    /// `min_w (w − z)ᵀG(z)` over the probes.
    pub worst_violation: f64,
    pub probes: usize,
}

impl ViCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.fixed_point_residual <= tol && self.worst_violation >= -1e-8
    }
}

/// Checks a claimed solution against the projection fixed-point equation
/// and a sampled form of the variational inequality over `Ω`. The probes
/// are `n_probe` random points near `z` plus `(x, eᵢ)` for each `i` and
/// `(x, 0)`.
pub fn check_vi_fixed_point(
    p: &ProblemSpec,
    lc: &LinearConstraints,
    cfg: &SolverConfig,
    z: &PrimalDualPoint,
    n_probe: usize,
    seed: u64,
) -> Result<ViCheck> {
    let g = gradient_map(p, lc, z)?;
    let zs = z.stacked();
    let target = project_omega(&(&zs - &g * cfg.alpha), lc.n());
    let fixed_point_residual = (target.stacked() - &zs).norm();

    let (n, m) = (lc.n(), lc.m());
    let mut probes: Vec<DVector<f64>> = Vec::with_capacity(n_probe + m + 1);
    for i in 0..m {
        let mut lambda = DVector::zeros(m);
        lambda[i] = 1.0;
        probes.push(linalg::stack(&z.x, &lambda));
    }
    probes.push(linalg::stack(&z.x, &DVector::zeros(m)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_probe {
        let x = DVector::from_iterator(n, z.x.iter().map(|xi| xi + rng.random_range(-1.0..=1.0)));
        let lambda = DVector::from_iterator(m, (0..m).map(|_| rng.random_range(0.0..=10.0)));
        probes.push(linalg::stack(&x, &lambda));
    }
    let worst_violation = probes
        .iter()
        .map(|w| (w - &zs).dot(&g))
        .fold(f64::INFINITY, f64::min);
    Ok(ViCheck {
        fixed_point_residual,
        worst_violation,
        probes: probes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{canonical, canonical_solution, small_random};
    use approx::assert_abs_diff_eq;

    fn pt(x: f64, l: f64) -> PrimalDualPoint {
        PrimalDualPoint::new_unchecked(DVector::from_element(1, x), DVector::from_element(1, l))
    }

    #[test]
    fn kkt_at_canonical_solution() {
        let (p, lc) = canonical();
        let r = kkt_residuals(&p, &lc, &canonical_solution(), 1e-12).unwrap();
        assert!(r.passed);
        assert_eq!(r.max_residual(), 0.0);
    }

    #[test]
    fn kkt_at_interior_point() {
        let (p, lc) = canonical();
        let r = kkt_residuals(&p, &lc, &pt(2.0, 0.0), 1e-8).unwrap();
        assert_eq!(r.primal_feasibility, 0.0);
        assert_eq!(r.stationarity, 4.0);
        assert!(!r.passed);
    }

    #[test]
    fn kkt_flags_negative_multiplier() {
        let (p, lc) = canonical();
        let r = kkt_residuals(&p, &lc, &pt(1.0, -0.5), 1e-8).unwrap();
        assert_eq!(r.dual_feasibility, 0.5);
        assert!(!r.passed);
    }

    #[test]
    fn reference_for_canonical_and_inactive_problems() {
        let (p, lc) = canonical();
        assert_eq!(reference_solve(&p, &lc).unwrap(), canonical_solution());

        // f = x², g = x − 1 ≤ 0
        let lc = LinearConstraints::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(reference_solve(&p, &lc).unwrap(), pt(0.0, 0.0));
    }

    #[test]
    fn reference_passes_kkt_on_random_problems() {
        for seed in 0..20 {
            let (p, lc) = small_random(1 + (seed as usize % 6), 8, seed);
            let z = reference_solve(&p, &lc).unwrap();
            assert!(kkt_residuals(&p, &lc, &z, 1e-8).unwrap().passed, "seed {seed}");
        }
    }

    #[test]
    fn dual_flow_matches_enumeration() {
        for seed in 0..10 {
            let (p, lc) = small_random(5, 9, 100 + seed);
            let a = enumerate_active_sets(&p, &lc).unwrap();
            let b = dual_flow_solve(&p, &lc).unwrap();
            assert!((a.stacked() - b.stacked()).amax() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn canonical_certificate() {
        let (p, lc) = canonical();
        let c = certify_monotonicity(&p, &lc, 2.0).unwrap();
        assert_abs_diff_eq!(c.lambda_min_sym_gr, 2.0 - 2f64.sqrt(), epsilon = 1e-12);
        assert!(c.passed_prop1);
        assert_eq!(c.lambda_min_sym_g, 0.0);
        assert!(c.passed_lemma1);
        assert!(c.k_satisfies_rule);
        // 2·2·2 − 2 − 1 − 2·1·2 = 1
        assert_abs_diff_eq!(c.schur_min_eig, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampled_ratio_respects_certificate() {
        let (p, lc) = canonical();
        let geom = NaturalGradientParams::with_k(&p, &lc, 2.0).unwrap();
        let s = sample_monotonicity(&p, &lc, &geom, 1000, 3).unwrap();
        assert!(s.euclidean_ratio >= 0.5 - 1e-8);
        assert!(s.euclidean_ratio >= geom.nu - 1e-9);
        assert_eq!(s.pairs, 1000);
        assert!(sample_monotonicity(&p, &lc, &geom, 0, 3).is_err());
    }

    #[test]
    fn metric_consistency_canonical() {
        let (p, lc) = canonical();
        let d = diagnose_metric_consistency(&p, &lc, 2.0, &pt(0.0, 0.0)).unwrap();
        assert_eq!(d.newgrad, DVector::from_vec(vec![1.0, -2.0]));
        // R = [[1,1],[1,2]] is invertible: R⁻¹(0,−1) = (1,−1)
        assert_abs_diff_eq!(d.pseudoinverse[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.pseudoinverse[1], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.discrepancy, 1.0, epsilon = 1e-12);

        let at_opt = diagnose_metric_consistency(&p, &lc, 2.0, &canonical_solution()).unwrap();
        assert_eq!(at_opt.discrepancy, 0.0);
    }

    #[test]
    fn vi_check_canonical() {
        let (p, lc) = canonical();
        let cfg = SolverConfig::euclidean();
        let at_opt = check_vi_fixed_point(&p, &lc, &cfg, &canonical_solution(), 100, 1).unwrap();
        assert_eq!(at_opt.fixed_point_residual, 0.0);
        assert_eq!(at_opt.worst_violation, 0.0);
        assert_eq!(at_opt.probes, 102);
        assert!(at_opt.passed(1e-12));

        let off = check_vi_fixed_point(&p, &lc, &cfg, &pt(0.0, 0.0), 100, 1).unwrap();
        assert_eq!(off.fixed_point_residual, 1.0);
        assert!(!off.passed(1e-6));
    }
}
