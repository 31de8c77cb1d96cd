//! Seeded random problem instances.
//!
//! Entries are i.i.d. standard normal, drawn from ChaCha8 (`rand_chacha`)
//! seeded with `seed_from_u64(seed)` through `rand_distr::StandardNormal`.
//! Matrices are filled row-major. Draw order is `A, b` for random QPs and
//! `C, d, A, b` for regularized least squares; a resample continues the
//! same stream.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{audit_assumptions, LinearConstraints, ProblemSpec};

/// Attempts before giving up on an instance that fails the audit.
pub const MAX_RESAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    /// `½xᵀ(hI)x`, Gaussian `A`, `b`.
    RandomQP,
    /// `‖Cx − d‖² + (θ/2)‖x‖²`, Gaussian `C`, `d`, `A`, `b`.
    RandomRegLSQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
    /// `h` in `H = hI` (RandomQP only).
    pub hessian_scale: f64,
    /// Ridge weight (RandomRegLSQ only).
    pub theta: f64,
}

impl GeneratorSpec {
    pub fn random_qp(m: usize, n: usize, hessian_scale: f64, seed: u64) -> Self {
        Self {
            family: Family::RandomQP,
            m,
            n,
            seed,
            hessian_scale,
            theta: 1.0,
        }
    }

    pub fn random_reg_lsq(m: usize, n: usize, theta: f64, seed: u64) -> Self {
        Self {
            family: Family::RandomRegLSQ,
            m,
            n,
            seed,
            hessian_scale: 1.0,
            theta,
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| StandardNormal.sample(rng)))
}

/// Draws a problem instance, resampling up to [`MAX_RESAMPLES`] times until
/// it passes [`audit_assumptions`].
pub fn generate_problem(spec: &GeneratorSpec) -> Result<(ProblemSpec, LinearConstraints)> {
    if spec.m == 0 || spec.n == 0 {
        return Err(invalid("m, n", "dimensions must be positive"));
    }
    if spec.m > spec.n {
        return Err(invalid("m", format!("m = {} exceeds n = {}", spec.m, spec.n)));
    }
    match spec.family {
        Family::RandomQP if !(spec.hessian_scale > 0.0) => {
            return Err(invalid("hessian_scale", format!("must be positive, got {}", spec.hessian_scale)))
        }
        Family::RandomRegLSQ if !(spec.theta > 0.0) => {
            return Err(invalid("theta", format!("must be positive, got {}", spec.theta)))
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut last_failure = String::new();
    for _ in 0..MAX_RESAMPLES {
        let problem = match spec.family {
            Family::RandomQP => ProblemSpec::quadratic(
                DMatrix::identity(spec.n, spec.n) * spec.hessian_scale,
                DVector::zeros(spec.n),
            )?,
            Family::RandomRegLSQ => {
                let c = gaussian_matrix(&mut rng, spec.m, spec.n);
                let d = gaussian_vector(&mut rng, spec.m);
                ProblemSpec::regularized_least_squares(c, d, spec.theta)?
            }
        };
        let a = gaussian_matrix(&mut rng, spec.m, spec.n);
        let b = gaussian_vector(&mut rng, spec.m);
        let lc = LinearConstraints::new(a, b)?;
        let report = audit_assumptions(&problem, &lc);
        match report.require() {
            Ok(()) => return Ok((problem, lc)),
            Err(e) => last_failure = e.to_string(),
        }
    }
    Err(Error::AuditFailed(format!(
        "no valid instance after {MAX_RESAMPLES} draws: {last_failure}"
    )))
}
