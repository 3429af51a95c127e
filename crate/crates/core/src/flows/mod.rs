//! Schatten-normalized particle flows and Gaussian-preserving affine flows.
//!
//! The particle update is `X_{k+1} = X_k + η Ξ_p(∇_X f(X_k))`: gradient
//! descent for `p = 1`, a Frobenius-normalized step for `p = 2`, and the Muon
//! step for `p = ∞`.

mod affine;
mod mmd;
mod selector;

pub use affine::{
    gaussian_affine_flow, gaussian_relative_entropy, AffineFlowOptions, AffineGradientSpec,
    EntropyToGaussianTarget, REGULARIZATION_DELTA,
};
pub use mmd::{mmd_gradient, mmd_gradient_with, mmd_value, mmd_value_with, DEFAULT_EPS};
pub use selector::{
    duality_map, empirical_pairing, muon_rhs, schatten_selector, schatten_triplet, tangent_norm_sq,
    tangent_norm_sq_svd, RANK_TOL,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, CsvTable};
use crate::par::Execution;

/// Base step sizes for `p = 1, 2, ∞`, measured against the first variation
/// `n ∇_X f`. The step applied to `∇_X f` is the base times the particle count.
pub const DEFAULT_ETA: [f64; 3] = [0.1, 0.05, 0.02];

/// Default step for a cloud of `n` particles: `n` times the base step of the exponent.
pub fn default_eta(p: f64, n: usize) -> f64 {
    let base = if p == 1.0 {
        DEFAULT_ETA[0]
    } else if p.is_infinite() {
        DEFAULT_ETA[2]
    } else {
        DEFAULT_ETA[1]
    };
    base * n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Snapshot {
    Particles {
        #[serde(with = "crate::io::dmatrix_rows")]
        points: DMatrix<f64>,
    },
    Moments {
        #[serde(with = "crate::io::dvector_list")]
        mean: DVector<f64>,
        #[serde(with = "crate::io::dmatrix_rows")]
        cov: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub step: usize,
    pub objective: f64,
    /// Schatten-1, -2 and -∞ norms of the gradient matrix.
    pub grad_norms: [f64; 3],
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FlowStatus {
    Completed,
    /// The objective exceeded ten times its initial value at this step.
    Diverged { step: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    #[serde(with = "crate::io::exponent")]
    pub p: f64,
    pub steps: Vec<FlowStep>,
    pub status: FlowStatus,
}

impl FlowTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.objective).collect()
    }

    pub fn initial_objective(&self) -> f64 {
        self.steps.first().map_or(f64::NAN, |s| s.objective)
    }

    pub fn final_objective(&self) -> f64 {
        self.steps.last().map_or(f64::NAN, |s| s.objective)
    }

    /// `true` when no recorded objective exceeds its predecessor by more than `slack`.
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.steps.windows(2).all(|w| w[1].objective <= w[0].objective + slack)
    }

    pub fn last_snapshot(&self) -> Option<&Snapshot> {
        self.steps.iter().rev().find_map(|s| s.snapshot.as_ref())
    }

    /// CSV with `step, objective, grad_s1, grad_s2, grad_sinf` followed by the
    /// flattened snapshot (empty cells on rows without one).
    pub fn to_csv(&self) -> CsvTable {
        let width = self
            .steps
            .iter()
            .find_map(|s| s.snapshot.as_ref())
            .map(snapshot_header)
            .unwrap_or_default();
        let mut header: Vec<String> =
            ["step", "objective", "grad_s1", "grad_s2", "grad_sinf"].iter().map(|s| s.to_string()).collect();
        let extra = width.len();
        header.extend(width);
        let mut t = CsvTable::new(&header);
        for s in &self.steps {
            let mut row = vec![s.step.to_string(), fmt_f64(s.objective)];
            row.extend(s.grad_norms.iter().map(|&g| fmt_f64(g)));
            match &s.snapshot {
                Some(snap) => row.extend(snapshot_values(snap).into_iter().map(fmt_f64)),
                None => row.extend(std::iter::repeat_n(String::new(), extra)),
            }
            t.push(row);
        }
        t
    }
}

fn snapshot_header(s: &Snapshot) -> Vec<String> {
    match s {
        Snapshot::Particles { points } => (0..points.nrows())
            .flat_map(|i| (0..points.ncols()).map(move |c| format!("x{i}_{c}")))
            .collect(),
        Snapshot::Moments { mean, cov } => {
            let d = mean.len();
            let mut h: Vec<String> = (0..d).map(|c| format!("m{c}")).collect();
            h.extend((0..d).flat_map(|i| (0..cov.ncols()).map(move |j| format!("S{i}{j}"))));
            h
        }
    }
}

fn snapshot_values(s: &Snapshot) -> Vec<f64> {
    match s {
        Snapshot::Particles { points } => (0..points.nrows())
            .flat_map(|i| (0..points.ncols()).map(move |c| points[(i, c)]))
            .collect(),
        Snapshot::Moments { mean, cov } => {
            let mut v: Vec<f64> = mean.iter().copied().collect();
            v.extend((0..cov.nrows()).flat_map(|i| (0..cov.ncols()).map(move |j| cov[(i, j)])));
            v
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleFlowOptions {
    pub eta: f64,
    pub steps: usize,
    /// Record particle positions every this many steps (0 keeps only the endpoints).
    pub snapshot_every: usize,
    pub eps: f64,
    pub exec: Execution,
}

impl ParticleFlowOptions {
    pub fn for_exponent(p: f64, n: usize) -> Self {
        Self {
            eta: default_eta(p, n),
            steps: 500,
            snapshot_every: 0,
            eps: DEFAULT_EPS,
            exec: Execution::best_available(),
        }
    }
}

/// Explicit Euler flow of `MMD²(·, target)` under the Schatten-`p` selector.
pub fn euler_flow(x0: &DMatrix<f64>, target: &DMatrix<f64>, p: f64, opts: &ParticleFlowOptions) -> Result<FlowTrace> {
    if !(opts.eta.is_finite() && opts.eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {}", opts.eta)));
    }
    crate::psd_norms::NormSpec::schatten(p)?;
    let mut x = x0.clone();
    let mut steps = Vec::with_capacity(opts.steps + 1);
    let mut status = FlowStatus::Completed;
    let mut initial = f64::NAN;
    for k in 0..=opts.steps {
        let f = mmd_value_with(&x, target, opts.eps, opts.exec)?;
        let g = mmd_gradient_with(&x, target, opts.eps, opts.exec)?;
        if k == 0 {
            initial = f;
        }
        let keep = k == 0 || k == opts.steps || (opts.snapshot_every > 0 && k % opts.snapshot_every == 0);
        steps.push(FlowStep {
            step: k,
            objective: f,
            grad_norms: schatten_triplet(&g)?,
            snapshot: keep.then(|| Snapshot::Particles { points: x.clone() }),
        });
        if !f.is_finite() || (k > 0 && f > 10.0 * initial.abs().max(f64::MIN_POSITIVE)) {
            status = FlowStatus::Diverged { step: k };
            if let Some(last) = steps.last_mut() {
                last.snapshot.get_or_insert_with(|| Snapshot::Particles { points: x.clone() });
            }
            break;
        }
        if k == opts.steps {
            break;
        }
        x += schatten_selector(&g, p)? * opts.eta;
    }
    Ok(FlowTrace { p, steps, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
        DMatrix::<f64>::from_fn(n, 2, |_, _| StandardNormal.sample(rng)).add_scalar(shift)
    }

    #[test]
    fn one_gradient_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x0 = cloud(&mut rng, 6, 0.0);
        let y = cloud(&mut rng, 5, 2.0);
        let opts = ParticleFlowOptions { eta: 0.3, steps: 1, snapshot_every: 1, eps: 0.01, exec: Execution::Sequential };
        let trace = euler_flow(&x0, &y, 1.0, &opts).unwrap();
        let g = mmd_gradient(&x0, &y, 0.01).unwrap();
        let Some(Snapshot::Particles { points }) = trace.last_snapshot() else { panic!() };
        assert_relative_eq!(*points, &x0 - g * 0.3, epsilon = 1e-15);
    }

    #[test]
    fn stationary_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = cloud(&mut rng, 6, 0.0);
        for p in [1.0, 2.0, f64::INFINITY] {
            let trace = euler_flow(&x0, &x0, p, &ParticleFlowOptions { steps: 5, ..ParticleFlowOptions::for_exponent(p, 6) })
                .unwrap();
            let Some(Snapshot::Particles { points }) = trace.last_snapshot() else { panic!() };
            assert!((points - &x0).amax() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let x0 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.6, -0.1]);
        let opts = ParticleFlowOptions { eta: 1e4, steps: 50, snapshot_every: 0, eps: 0.01, exec: Execution::Sequential };
        let trace = euler_flow(&x0, &y, 1.0, &opts).unwrap();
        assert!(matches!(trace.status, FlowStatus::Diverged { .. }));
        assert!(euler_flow(&x0, &y, 1.0, &ParticleFlowOptions { eta: 0.0, ..opts }).is_err());
    }

    #[test]
    fn csv_columns() {
        let x0 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let y = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.6, -0.1]);
        let opts = ParticleFlowOptions { eta: 0.1, steps: 3, snapshot_every: 2, eps: 0.01, exec: Execution::Sequential };
        let csv = euler_flow(&x0, &y, 2.0, &opts).unwrap().to_csv().render();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,objective,grad_s1,grad_s2,grad_sinf,x0_0,x0_1,x1_0,x1_1");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].ends_with(",,,,"));
        assert!(!lines[3].ends_with(','));
    }
}
