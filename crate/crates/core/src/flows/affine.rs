use nalgebra::{DMatrix, DVector};

use super::{FlowStatus, FlowStep, FlowTrace, Snapshot};
use crate::error::{Error, Result};
use crate::linalg::{log_det_spd, lp_norm, psd_sqrt, spd_inverse, symmetrize, SymEigen};
use crate::measures::GaussianMeasure;
use crate::psd_norms::{active_dual_raw, dual_exponent, NormSpec, PsdMatrix};

/// Weight of `Id/d^{1/q}` mixed into the active matrix to keep it invertible.
pub const REGULARIZATION_DELTA: f64 = 1e-6;

/// A first variation that is affine in space on Gaussian laws: `g_μ(x) = b + Bx`.
pub trait AffineGradientSpec {
    fn field(&self, mu: &GaussianMeasure) -> Result<(DVector<f64>, DMatrix<f64>)>;
    /// Objective value recorded along the trajectory.
    fn objective(&self, mu: &GaussianMeasure) -> Result<f64>;
}

/// Relative entropy to `𝒩(m*, Σ*)`: `g(x) = Σ*⁻¹(x − m*) − Σ⁻¹(x − m)`.
#[derive(Debug, Clone)]
pub struct EntropyToGaussianTarget {
    target: GaussianMeasure,
    target_inv: DMatrix<f64>,
}

impl EntropyToGaussianTarget {
    pub fn new(target: GaussianMeasure) -> Result<Self> {
        let target_inv = spd_inverse(target.cov().matrix(), "target covariance")?;
        Ok(Self { target, target_inv })
    }

    pub fn target(&self) -> &GaussianMeasure {
        &self.target
    }
}

impl AffineGradientSpec for EntropyToGaussianTarget {
    fn field(&self, mu: &GaussianMeasure) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if mu.dim() != self.target.dim() {
            return Err(Error::DimensionMismatch("Gaussian and target dimensions differ".into()));
        }
        let inv = spd_inverse(mu.cov().matrix(), "flow covariance")?;
        let b_mat = &self.target_inv - &inv;
        let b = &inv * mu.mean() - &self.target_inv * self.target.mean();
        Ok((b, b_mat))
    }

    fn objective(&self, mu: &GaussianMeasure) -> Result<f64> {
        gaussian_relative_entropy(mu, &self.target)
    }
}

/// `KL(𝒩(m, Σ) ‖ 𝒩(m*, Σ*))`.
pub fn gaussian_relative_entropy(mu: &GaussianMeasure, target: &GaussianMeasure) -> Result<f64> {
    let inv = spd_inverse(target.cov().matrix(), "target covariance")?;
    let d = mu.dim() as f64;
    let diff = target.mean() - mu.mean();
    let tr = (&inv * mu.cov().matrix()).trace();
    let quad = (diff.transpose() * &inv * &diff)[(0, 0)];
    Ok(0.5 * (tr + quad - d + log_det_spd(target.cov().matrix())? - log_det_spd(mu.cov().matrix())?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFlowOptions {
    pub dt: f64,
    pub steps: usize,
}

/// Active matrix of `S` mixed with `δ Id/d^{1/q}`; a convex combination of two members of `K_p`.
fn regularized_active(s: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let d = s.nrows();
    let q_star = active_dual_raw(s, NormSpec::schatten(p)?)?;
    if p == 1.0 {
        return Ok(q_star);
    }
    let q = dual_exponent(p);
    let iso = if q.is_infinite() { 1.0 } else { (d as f64).powf(-1.0 / q) };
    let reg = q_star * (1.0 - REGULARIZATION_DELTA) + DMatrix::identity(d, d) * (REGULARIZATION_DELTA * iso);
    let floor = SymEigen::new(&reg)?.min_value();
    if floor <= 1e-300 {
        return Err(Error::RegularizationFloor(floor));
    }
    Ok(reg)
}

/// Explicit Euler integration of `ṁ = a + Am`, `Σ̇ = AΣ + ΣAᵀ` with `A = −Q*⁻¹B`, `a = −Q*⁻¹b`.
pub fn gaussian_affine_flow(
    mu0: &GaussianMeasure,
    spec: &dyn AffineGradientSpec,
    p: f64,
    opts: &AffineFlowOptions,
) -> Result<FlowTrace> {
    NormSpec::schatten(p)?;
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", opts.dt)));
    }
    let mut m = mu0.mean().clone();
    let mut sigma = mu0.cov().matrix().clone();
    let mut steps = Vec::with_capacity(opts.steps + 1);
    for k in 0..=opts.steps {
        let mu = GaussianMeasure::new(m.clone(), PsdMatrix::from_matrix(sigma.clone())?)?;
        let (b, b_mat) = spec.field(&mu)?;
        let center = &b + &b_mat * &m;
        let s = symmetrize(&(&center * center.transpose() + &b_mat * &sigma * b_mat.transpose()));
        let root = psd_sqrt(&s)?;
        let root_eig = SymEigen::new(&root)?;
        let vals: Vec<f64> = root_eig.values.iter().map(|v| v.max(0.0)).collect();
        steps.push(FlowStep {
            step: k,
            objective: spec.objective(&mu)?,
            grad_norms: [lp_norm(&vals, 1.0), lp_norm(&vals, 2.0), lp_norm(&vals, f64::INFINITY)],
            snapshot: Some(Snapshot::Moments { mean: m.clone(), cov: sigma.clone() }),
        });
        if k == opts.steps {
            break;
        }
        let q = regularized_active(&s, p)?;
        let q_inv = spd_inverse(&q, "active matrix")?;
        let a_mat = -(&q_inv * &b_mat);
        let a = -(&q_inv * &b);
        let dm = &a + &a_mat * &m;
        let ds = &a_mat * &sigma + &sigma * a_mat.transpose();
        m += dm * opts.dt;
        sigma = symmetrize(&(&sigma + ds * opts.dt));
        let floor = SymEigen::new(&sigma)?.min_value();
        if floor <= 0.0 {
            return Err(Error::LostPsd { step: k + 1, min_eigenvalue: floor });
        }
    }
    Ok(FlowTrace { p, steps, status: FlowStatus::Completed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn moments(trace: &FlowTrace) -> (DVector<f64>, DMatrix<f64>) {
        match trace.steps.last().unwrap().snapshot.as_ref().unwrap() {
            Snapshot::Moments { mean, cov } => (mean.clone(), cov.clone()),
            _ => unreachable!(),
        }
    }

    fn scalar(m: f64, v: f64) -> GaussianMeasure {
        GaussianMeasure::new(DVector::from_vec(vec![m]), PsdMatrix::diagonal(&[v]).unwrap()).unwrap()
    }

    #[test]
    fn one_dimensional_closed_form() {
        // σ²(t) = σ*² + (σ₀² − σ*²) e^{−2t/σ*²},  m(t) = m* + (m₀ − m*) e^{−t/σ*²}
        let (m0, v0, ms, vs) = (1.0, 0.5, -1.0, 2.0);
        let spec = EntropyToGaussianTarget::new(scalar(ms, vs)).unwrap();
        let t = 1.0;
        let opts = AffineFlowOptions { dt: 1e-4, steps: 10_000 };
        let trace = gaussian_affine_flow(&scalar(m0, v0), &spec, 1.0, &opts).unwrap();
        let (m, s) = moments(&trace);
        assert_relative_eq!(s[(0, 0)], vs + (v0 - vs) * (-2.0 * t / vs).exp(), epsilon = 1e-4);
        assert_relative_eq!(m[0], ms + (m0 - ms) * (-t / vs).exp(), epsilon = 1e-4);
    }

    #[test]
    fn target_is_stationary() {
        let target = GaussianMeasure::new(
            DVector::from_vec(vec![1.0, 2.0]),
            PsdMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
        )
        .unwrap();
        let spec = EntropyToGaussianTarget::new(target.clone()).unwrap();
        for p in [1.0, 2.0, f64::INFINITY] {
            let trace = gaussian_affine_flow(&target, &spec, p, &AffineFlowOptions { dt: 0.01, steps: 20 }).unwrap();
            let (m, s) = moments(&trace);
            assert!((m - target.mean()).amax() < 1e-12);
            assert!((s - target.cov().matrix()).amax() < 1e-12);
            assert!(trace.final_objective().abs() < 1e-12);
        }
    }

    #[test]
    fn trace_entropy_nonincreasing() {
        let target = GaussianMeasure::new(
            DVector::from_vec(vec![2.0, -1.0]),
            PsdMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.4, 0.8])).unwrap(),
        )
        .unwrap();
        let spec = EntropyToGaussianTarget::new(target).unwrap();
        let mu0 = GaussianMeasure::isotropic(2, 0.3).unwrap();
        let trace = gaussian_affine_flow(&mu0, &spec, 1.0, &AffineFlowOptions { dt: 1e-3, steps: 3000 }).unwrap();
        assert!(trace.is_nonincreasing(0.0));
        assert!(trace.final_objective() < 1e-2 * trace.initial_objective());
    }

    #[test]
    fn psd_loss_is_an_error() {
        let spec = EntropyToGaussianTarget::new(scalar(0.0, 1e-3)).unwrap();
        let r = gaussian_affine_flow(&scalar(0.0, 1.0), &spec, 1.0, &AffineFlowOptions { dt: 1.0, steps: 3 });
        assert!(matches!(r, Err(Error::LostPsd { .. })));
    }
}
