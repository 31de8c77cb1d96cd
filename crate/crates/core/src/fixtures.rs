//! Ready-made problem instances.

use nalgebra::{DMatrix, DVector};

use crate::generate::{generate_problem, GeneratorSpec};
use crate::problem::{LinearConstraints, PrimalDualPoint, ProblemSpec};

/// `min x²  s.t.  x ≥ 1`, written as `f = ½·2x²`, `A = [−1]`, `b = [−1]`.
/// Its saddle point is `(x*, λ*) = (1, 2)`.
pub fn canonical() -> (ProblemSpec, LinearConstraints) {
    let p = ProblemSpec::quadratic(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1))
        .expect("canonical objective");
    let lc = LinearConstraints::new(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, -1.0))
        .expect("canonical constraints");
    (p, lc)
}

pub fn canonical_solution() -> PrimalDualPoint {
    PrimalDualPoint::from_slices(&[1.0], &[2.0]).expect("nonnegative multiplier")
}

/// A seeded random QP with `H = 2I`.
pub fn small_random(m: usize, n: usize, seed: u64) -> (ProblemSpec, LinearConstraints) {
    generate_problem(&GeneratorSpec::random_qp(m, n, 2.0, seed)).expect("audited random instance")
}
