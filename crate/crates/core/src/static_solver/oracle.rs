//! Independent grid oracle for the outer maximization in two dimensions.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{InnerSolver, QuadraticOt};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::par::{map_indexed, Execution};
use crate::psd_norms::{dual_exponent, NormSpec};

/// Grid maximum of `W_Q²` over `Q = R(θ) diag(λ₁, λ₂) R(θ)ᵀ`, with `θ` on
/// `n_theta` points of `[0, π)` and `(λ₁, λ₂)` on `n_radius` points of the
/// boundary arc `λ₁^q + λ₂^q = 1, λ ≥ 0`. Each cell is an exact inner LP, so
/// the result is a certified lower bound on `W_γ²`.
pub fn grid_oracle(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    norm: NormSpec,
    n_theta: usize,
    n_radius: usize,
) -> Result<f64> {
    grid_oracle_with(source, target, norm, n_theta, n_radius, Execution::best_available())
}

pub fn grid_oracle_with(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    norm: NormSpec,
    n_theta: usize,
    n_radius: usize,
    exec: Execution,
) -> Result<f64> {
    if source.dim() != 2 || target.dim() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "grid oracle is implemented for d = 2, got d = {}",
            source.dim()
        )));
    }
    if n_theta == 0 || n_radius == 0 {
        return Err(Error::InvalidArgument("grid sizes must be positive".into()));
    }
    let p = norm.require_schatten("grid_oracle")?;
    if p == 1.0 {
        let mut ot = QuadraticOt::new(source, target, InnerSolver::ExactLp)?;
        return Ok(ot.solve(&DMatrix::identity(2, 2))?.0);
    }
    let q = dual_exponent(p);
    let arc: Vec<(f64, f64)> = (0..n_radius)
        .map(|k| {
            let phi = if n_radius == 1 {
                std::f64::consts::FRAC_PI_4
            } else {
                std::f64::consts::FRAC_PI_2 * k as f64 / (n_radius - 1) as f64
            };
            let (s, c) = phi.sin_cos();
            // (c²)^{1/q}, (s²)^{1/q} lie on the unit ℓq sphere
            ((c * c).powf(1.0 / q), (s * s).powf(1.0 / q))
        })
        .collect();
    let rows = map_indexed(n_theta, exec, |t| -> Result<f64> {
        let theta = std::f64::consts::PI * t as f64 / n_theta as f64;
        let (s, c) = theta.sin_cos();
        let mut ot = QuadraticOt::new(source, target, InnerSolver::ExactLp)?;
        let mut best = f64::NEG_INFINITY;
        for &(l1, l2) in &arc {
            let qm = DMatrix::from_row_slice(
                2,
                2,
                &[
                    l1 * c * c + l2 * s * s,
                    (l1 - l2) * c * s,
                    (l1 - l2) * c * s,
                    l1 * s * s + l2 * c * c,
                ],
            );
            best = best.max(ot.solve(&qm)?.0);
        }
        Ok(best)
    });
    let mut best = f64::NEG_INFINITY;
    for r in rows {
        best = best.max(r?);
    }
    Ok(best)
}
