//! Fixed-point residual bounds for contractive denoising operators.
//!
//! An operator T with contraction rate kappa < 1 around a fixed point z*
//! satisfies ||z0 - z*|| <= ||z0 - T(z0)|| / (1 - kappa): the distance to
//! the fixed point is bounded by the observable one-step reconstruction
//! residual. The operators here are linear around z*, so kappa is known
//! exactly and the bound can be checked to rounding error.

use crate::error::{CoreError, Result};
use crate::rng::rng_from_seed;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// T(z) = z* + A(z - z*) with spectral norm of A exactly kappa.
#[derive(Debug, Clone)]
pub struct ContractionOperator {
    fixed_point: Vec<f64>,
    kappa: f64,
    /// Row-major d x d matrix.
    matrix: Vec<f64>,
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(CoreError::InvalidInput(format!(
            "contraction rate {kappa} must lie in [0, 1)"
        )));
    }
    Ok(())
}

fn check_dim(fixed_point: &[f64]) -> Result<()> {
    if fixed_point.is_empty() {
        return Err(CoreError::InvalidInput("operator dimension must be >= 1".into()));
    }
    if fixed_point.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput("fixed point must be finite".into()));
    }
    Ok(())
}

impl ContractionOperator {
    /// Uniform shrink A = kappa * I; the bound holds with equality.
    pub fn scalar(fixed_point: Vec<f64>, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        check_dim(&fixed_point)?;
        let d = fixed_point.len();
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            matrix[i * d + i] = kappa;
        }
        Ok(Self { fixed_point, kappa, matrix })
    }

    /// A = Q diag(s) Q^T for a random rotation Q and singular values
    /// s_0 = kappa >= s_i >= 0: anisotropic shrink with spectral norm
    /// exactly kappa (up to matrix-product rounding).
    pub fn rotated(fixed_point: Vec<f64>, kappa: f64, seed: u64) -> Result<Self> {
        check_kappa(kappa)?;
        check_dim(&fixed_point)?;
        let d = fixed_point.len();
        let mut rng = rng_from_seed(seed);
        let mut singular = vec![kappa; d];
        for s in singular.iter_mut().skip(1) {
            *s = kappa * rng.gen::<f64>();
        }
        // Q as a product of random Givens rotations applied to I
        let mut q = vec![0.0; d * d];
        for i in 0..d {
            q[i * d + i] = 1.0;
        }
        if d > 1 {
            for _ in 0..3 * d {
                let i = rng.gen_range(0..d);
                let j = loop {
                    let j = rng.gen_range(0..d);
                    if j != i {
                        break j;
                    }
                };
                let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let (sin, cos) = theta.sin_cos();
                for col in 0..d {
                    let (a, b) = (q[i * d + col], q[j * d + col]);
                    q[i * d + col] = cos * a - sin * b;
                    q[j * d + col] = sin * a + cos * b;
                }
            }
        }
        // A = Q diag Q^T
        let mut matrix = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                matrix[r * d + c] = (0..d).map(|k| q[k * d + r] * singular[k] * q[k * d + c]).sum();
            }
        }
        Ok(Self { fixed_point, kappa, matrix })
    }

    pub fn dimension(&self) -> usize {
        self.fixed_point.len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn fixed_point(&self) -> &[f64] {
        &self.fixed_point
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.dimension();
        if z.len() != d {
            return Err(CoreError::InvalidInput(format!(
                "point dimension {} does not match operator dimension {d}",
                z.len()
            )));
        }
        let mut out = self.fixed_point.clone();
        for r in 0..d {
            out[r] += (0..d).map(|c| self.matrix[r * d + c] * (z[c] - self.fixed_point[c])).sum::<f64>();
        }
        Ok(out)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub samples: usize,
    /// Points where the distance bound failed by more than 1e-9 relative.
    pub violations: usize,
    /// Largest (lhs - rhs) / lhs over the sample: positive means the
    /// bound was broken, negative means it held with room to spare.
    pub max_relative_violation: f64,
    /// Largest (rhs - lhs) / lhs: how loose the bound got. Near zero
    /// together with the above means the bound is an equality.
    pub max_relative_slack: f64,
}

/// Violation threshold separating rounding noise from a broken bound.
pub const BOUND_TOLERANCE: f64 = 1e-9;

/// Check ||z0 - z*|| <= ||z0 - T(z0)|| / (1 - kappa) at random points.
///
/// Points are drawn around the fixed point at scales spanning six orders
/// of magnitude so the check exercises numerics, not one radius.
pub fn verify_bound(op: &ContractionOperator, samples: usize, seed: u64) -> Result<BoundReport> {
    if samples == 0 {
        return Err(CoreError::InvalidInput("bound check needs >= 1 sample".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut report = BoundReport {
        samples,
        violations: 0,
        max_relative_violation: f64::NEG_INFINITY,
        max_relative_slack: f64::NEG_INFINITY,
    };
    for s in 0..samples {
        let z0: Vec<f64> = if s == 0 {
            op.fixed_point().to_vec() // both sides must be exactly zero here
        } else {
            let scale = 10f64.powf(rng.gen_range(-3.0..3.0));
            op.fixed_point().iter().map(|c| c + scale * rng.gen_range(-1.0..1.0)).collect()
        };
        let tz = op.apply(&z0)?;
        let lhs = norm(&z0.iter().zip(op.fixed_point()).map(|(a, b)| a - b).collect::<Vec<_>>());
        let residual = norm(&z0.iter().zip(&tz).map(|(a, b)| a - b).collect::<Vec<_>>());
        let rhs = residual / (1.0 - op.kappa());
        if lhs == 0.0 {
            if rhs != 0.0 {
                return Err(CoreError::InvalidInput(format!(
                    "operator does not fix its fixed point: residual {rhs} at z*"
                )));
            }
            continue;
        }
        let violation = (lhs - rhs) / lhs;
        report.max_relative_violation = report.max_relative_violation.max(violation);
        report.max_relative_slack = report.max_relative_slack.max(-violation);
        if violation > BOUND_TOLERANCE {
            report.violations += 1;
        }
    }
    Ok(report)
}
