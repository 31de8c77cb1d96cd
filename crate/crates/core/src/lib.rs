//! Saddle-point solvers for strongly convex programs with linear inequality
//! constraints, built on projected primal-dual dynamics.
//!
//! Two flows are provided. The Euclidean flow follows the descent-ascent
//! gradient of the Lagrangian and is monotone. The natural-gradient flow
//! rescales that gradient with a metric parametrized by `k`; for
//! `k > ϱ` the rescaled field is strongly monotone and the flow converges
//! exponentially. The [`verification`] module certifies both properties
//! numerically and provides an independent active-set oracle.

pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod generate;
pub mod geometry;
pub mod linalg;
pub mod problem;
pub mod verification;

pub use dynamics::{
    auto_step, estimate_rate, euler_step, fit_log_decay, gradient_map, lyapunov_value, project_natural, project_omega, rhs, solve,
    IterationRecord, RateFit, Solver, SolverConfig, Start, Trajectory, Variant,
};
pub use error::{Error, Result};
pub use generate::{generate_problem, Family, GeneratorSpec};
pub use geometry::{
    build_metric, choose_k, compute_rho, manifold_residual, natural_gradient, r_inner, reduced_primal_rhs,
    split_tangent, MetricR, NaturalGradientParams, TangentSplit,
};
pub use problem::{
    audit_assumptions, AssumptionReport, LinearConstraints, ObjectiveKind, PrimalDualPoint, ProblemSpec,
};
pub use verification::{
    certify_monotonicity, check_vi_fixed_point, diagnose_metric_consistency, kkt_residuals, reference_solve,
    sample_monotonicity, KktReport, MetricConsistency, MonotonicityCertificate, MonotonicitySample, ViCheck,
};
pub use nalgebra::{DMatrix, DVector};
