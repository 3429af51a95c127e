//! Executable checks of geodesic, metric, convexity and quotient properties.
//!
//! Each probe returns a [`Check`] carrying the measured slack and a
//! pass/warn/fail status; [`suites`] groups them into named suites.

pub mod suites;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_bures::{gaussian_cost, gaussian_interpolate, GaussianOptions};
use crate::flows::gaussian_relative_entropy;
use crate::linalg::{spd_inverse, symmetrize, SymEigen};
use crate::measures::{displacement_covariance_raw, Coupling, DiscreteMeasure, GaussianMeasure};
use crate::psd_norms::{gamma_matrix, NormSpec};
use crate::static_solver::{spectral_wasserstein, SolverOptions, StaticSolution};

/// Atoms of an interpolated measure closer than this are merged.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The measured violation or deviation.
    pub measured: f64,
    /// Largest value of `measured` that still passes.
    pub threshold: f64,
    pub status: Status,
    pub detail: String,
}

impl Check {
    /// Pass when `measured ≤ threshold`, otherwise `on_failure`.
    pub fn bound(name: impl Into<String>, measured: f64, threshold: f64, on_failure: Status, detail: String) -> Self {
        let ok = measured <= threshold;
        Self {
            name: name.into(),
            measured,
            threshold,
            status: if ok { Status::Pass } else { on_failure },
            detail,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

fn merge_atoms(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<DiscreteMeasure> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out_pts: Vec<Vec<f64>> = Vec::new();
    let mut out_w: Vec<f64> = Vec::new();
    for i in order {
        let hit = out_pts.iter().rposition(|q| {
            q.iter().zip(&points[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= MERGE_TOL
        });
        match hit {
            Some(k) => out_w[k] += masses[i],
            None => {
                out_pts.push(points[i].clone());
                out_w.push(masses[i]);
            }
        }
    }
    let total: f64 = out_w.iter().sum();
    let w: Vec<f64> = out_w.iter().map(|x| x / total).collect();
    DiscreteMeasure::from_rows(&out_pts, w)
}

/// `((1−t)x + ty)#π` for an arbitrary coupling.
pub fn interpolate_coupling(coupling: &Coupling, t: f64) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("interpolation time {t} outside [0, 1]")));
    }
    let (src, tgt) = (coupling.source(), coupling.target());
    if t == 0.0 {
        return Ok((**src).clone());
    }
    if t == 1.0 {
        return Ok((**tgt).clone());
    }
    let plan = coupling.plan();
    let mut pts = Vec::new();
    let mut masses = Vec::new();
    for i in 0..src.len() {
        let x = src.point(i);
        for j in 0..tgt.len() {
            let w = plan[(i, j)];
            if w <= 0.0 {
                continue;
            }
            let y = tgt.point(j);
            pts.push(x.iter().zip(&y).map(|(a, b)| (1.0 - t) * a + t * b).collect());
            masses.push(w);
        }
    }
    merge_atoms(pts, masses)
}

/// Point at time `t` on the displacement interpolation of the solver coupling.
pub fn geodesic_interpolate(sol: &StaticSolution, t: f64) -> Result<DiscreteMeasure> {
    interpolate_coupling(&sol.coupling, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEntry {
    pub s: f64,
    pub t: f64,
    pub expected: f64,
    pub measured: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSpeedReport {
    pub distance: f64,
    pub entries: Vec<SpeedEntry>,
    pub max_relative_deviation: f64,
}

/// Compares `W_γ(μ_s, μ_t)` with `|t − s| W_γ(μ₀, μ₁)` along the solver geodesic.
pub fn constant_speed_check(
    mu: &Arc<DiscreteMeasure>,
    nu: &Arc<DiscreteMeasure>,
    norm: NormSpec,
    pairs: &[(f64, f64)],
    opts: &SolverOptions,
) -> Result<ConstantSpeedReport> {
    let sol = spectral_wasserstein(mu, nu, norm, opts)?;
    let distance = sol.value();
    let mut entries = Vec::new();
    let mut worst: f64 = 0.0;
    for &(s, t) in pairs {
        let a = Arc::new(geodesic_interpolate(&sol, s)?);
        let b = Arc::new(geodesic_interpolate(&sol, t)?);
        let measured = spectral_wasserstein(&a, &b, norm, opts)?.value();
        let expected = (t - s).abs() * distance;
        let rel = if expected > 0.0 { (measured - expected).abs() / expected } else { measured };
        worst = worst.max(rel);
        entries.push(SpeedEntry { s, t, expected, measured, relative_deviation: rel });
    }
    Ok(ConstantSpeedReport { distance, entries, max_relative_deviation: worst })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub value_sq: f64,
    /// `γ(Σ(π))` of the coupling carrying the path.
    pub coupling_cost: f64,
    /// `Σ_k Δt γ(∫ v v ᵀ dμ_{t_k})` with finite-difference velocities.
    pub action: f64,
    /// Largest entrywise deviation of a slice covariance from `Σ(π)`.
    pub max_covariance_deviation: f64,
}

/// Discretized Benamou–Brenier action of the displacement interpolation.
///
/// Each atom `(i, j)` moves from `(1−t_k)x_i + t_k y_j` to the next slice;
/// the velocity covariance of every slice is accumulated from those
/// positions and the action is the Riemann sum of `γ` over slices.
pub fn action_identity_check(sol: &StaticSolution, n_time: usize) -> Result<ActionReport> {
    if n_time == 0 {
        return Err(Error::InvalidArgument("n_time must be positive".into()));
    }
    let c = &sol.coupling;
    let (src, tgt) = (c.source(), c.target());
    let d = src.dim();
    let sigma = displacement_covariance_raw(src, tgt, c.plan())?;
    let dt = 1.0 / n_time as f64;
    let mut action = 0.0;
    let mut dev: f64 = 0.0;
    for k in 0..n_time {
        let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..src.len() {
            let x = src.points().row(i);
            for j in 0..tgt.len() {
                let w = c.plan()[(i, j)];
                if w <= 0.0 {
                    continue;
                }
                let y = tgt.points().row(j);
                let p0 = x * (1.0 - t0) + y * t0;
                let p1 = x * (1.0 - t1) + y * t1;
                let v = (p1 - p0) / dt;
                cov += v.transpose() * &v * w;
            }
        }
        let cov = symmetrize(&cov);
        dev = dev.max((&cov - &sigma).amax());
        action += dt * gamma_matrix(&cov, sol.norm)?;
    }
    Ok(ActionReport {
        value_sq: sol.value_sq,
        coupling_cost: gamma_matrix(&sigma, sol.norm)?,
        action,
        max_covariance_deviation: dev,
    })
}

/// Action of the two-segment path `x → (x+y)/2 + δ_ij → y` over the same coupling.
pub fn jittered_action(sol: &StaticSolution, jitter: &[DVector<f64>]) -> Result<f64> {
    let c = &sol.coupling;
    let (src, tgt) = (c.source(), c.target());
    let d = src.dim();
    let mut first = DMatrix::zeros(d, d);
    let mut second = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..src.len() {
        for j in 0..tgt.len() {
            let w = c.plan()[(i, j)];
            if w <= 0.0 {
                continue;
            }
            let delta = jitter
                .get(k)
                .ok_or_else(|| Error::InvalidArgument("not enough jitter vectors".into()))?;
            k += 1;
            let x = src.points().row(i).transpose();
            let y = tgt.points().row(j).transpose();
            let mid = (&x + &y) * 0.5 + delta;
            let v1 = (&mid - &x) * 2.0;
            let v2 = (&y - &mid) * 2.0;
            first += &v1 * v1.transpose() * w;
            second += &v2 * v2.transpose() * w;
        }
    }
    Ok(0.5 * gamma_matrix(&symmetrize(&first), sol.norm)? + 0.5 * gamma_matrix(&symmetrize(&second), sol.norm)?)
}

/// Number of atoms with positive mass in a coupling's support.
pub fn support_size(c: &Coupling) -> usize {
    c.plan().iter().filter(|&&w| w > 0.0).count()
}

/// Potential `h` of a linear functional `F_h(μ) = ∫ h dμ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    /// `½‖x‖²`.
    HalfSquaredNorm,
    /// `½ xᵀAx` with symmetric `A`.
    Quadratic(DMatrix<f64>),
}

impl Potential {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Potential::HalfSquaredNorm => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            Potential::Quadratic(a) => {
                let v = DVector::from_column_slice(x);
                0.5 * (v.transpose() * a * &v)[(0, 0)]
            }
        }
    }

    /// Smallest Hessian eigenvalue.
    pub fn kappa(&self) -> Result<f64> {
        match self {
            Potential::HalfSquaredNorm => Ok(1.0),
            Potential::Quadratic(a) => Ok(SymEigen::new(&symmetrize(a))?.min_value()),
        }
    }

    pub fn integrate(&self, mu: &DiscreteMeasure) -> f64 {
        (0..mu.len()).map(|i| mu.weights()[i] * self.eval(&mu.point(i))).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub kappa: f64,
    pub value_sq: f64,
    /// Largest `F(μ_t) − [(1−t)F(μ₀) + tF(μ₁) − (κ/2)t(1−t)W²]` over the times.
    pub max_violation: f64,
    pub slack: f64,
}

/// `F_h(μ_t) ≤ (1−t)F_h(μ₀) + tF_h(μ₁) − (κ/2)t(1−t)W_γ²` along the solver geodesic.
pub fn linear_convexity_probe(h: &Potential, sol: &StaticSolution, kappa: f64, times: &[f64]) -> Result<ConvexityReport> {
    let f0 = h.integrate(sol.coupling.source());
    let f1 = h.integrate(sol.coupling.target());
    let mut worst = f64::NEG_INFINITY;
    let mut scale: f64 = f0.abs().max(f1.abs());
    for &t in times {
        let ft = h.integrate(&geodesic_interpolate(sol, t)?);
        scale = scale.max(ft.abs());
        let bound = (1.0 - t) * f0 + t * f1 - 0.5 * kappa * t * (1.0 - t) * sol.value_sq;
        worst = worst.max(ft - bound);
    }
    Ok(ConvexityReport {
        kappa,
        value_sq: sol.value_sq,
        max_violation: worst,
        slack: 1e-6 * scale + sol.gap.max(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProbeReport {
    pub kappa: f64,
    pub value_sq: f64,
    pub max_violation: f64,
    pub holds: bool,
}

/// Relative entropy to `ν` along the computed Gaussian geodesic, against the
/// `κ`-convexity bound with `κ = λ_min(Σ*⁻¹)`.
pub fn gaussian_entropy_probe(
    mu0: &GaussianMeasure,
    mu1: &GaussianMeasure,
    nu: &GaussianMeasure,
    norm: NormSpec,
    times: &[f64],
) -> Result<EntropyProbeReport> {
    let kappa = SymEigen::new(&spd_inverse(nu.cov().matrix(), "reference covariance")?)?.min_value();
    let sol = gaussian_cost(mu0, mu1, norm, &GaussianOptions::default())?;
    let e0 = gaussian_relative_entropy(mu0, nu)?;
    let e1 = gaussian_relative_entropy(mu1, nu)?;
    let mut worst = f64::NEG_INFINITY;
    for &t in times {
        let mt = gaussian_interpolate(&sol, mu0, mu1, t)?;
        let et = gaussian_relative_entropy(&mt, nu)?;
        let bound = (1.0 - t) * e0 + t * e1 - 0.5 * kappa * t * (1.0 - t) * sol.value_sq;
        worst = worst.max(et - bound);
    }
    Ok(EntropyProbeReport { kappa, value_sq: sol.value_sq, max_violation: worst, holds: worst <= 1e-6 })
}

/// Nonnegative measure on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalMeasure {
    /// Unit directions, one per row.
    pub directions: DMatrix<f64>,
    pub masses: Vec<f64>,
}

impl SphericalMeasure {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Directions closer than `tol` are merged; directions are sorted lexicographically.
    pub fn canonical(&self, tol: f64) -> Vec<(Vec<f64>, f64)> {
        let mut atoms: Vec<(Vec<f64>, f64)> = (0..self.directions.nrows())
            .map(|i| (self.directions.row(i).iter().copied().collect(), self.masses[i]))
            .collect();
        atoms.sort_by(|a, b| {
            a.0.iter().zip(&b.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        for (dir, m) in atoms {
            match out.iter_mut().find(|(d, _)| d.iter().zip(&dir).all(|(a, b)| (a - b).abs() <= tol)) {
                Some(slot) => slot.1 += m,
                None => out.push((dir, m)),
            }
        }
        out
    }
}

/// `Π₂(μ)`: atoms `x/|x|` with masses `w|x|²`; atoms at the origin are dropped.
pub fn spherical_projection(mu: &DiscreteMeasure) -> SphericalMeasure {
    let d = mu.dim();
    let mut dirs = Vec::new();
    let mut masses = Vec::new();
    for i in 0..mu.len() {
        let x = mu.point(i);
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r < 1e-12 {
            continue;
        }
        dirs.push(x.iter().map(|v| v / r).collect::<Vec<f64>>());
        masses.push(mu.weights()[i] * r * r);
    }
    SphericalMeasure {
        directions: DMatrix::from_fn(dirs.len(), d, |i, k| dirs[i][k]),
        masses,
    }
}

/// `‖∫ x xᵀ dμ − T‖_F²`, a function of `μ` only through `Π₂(μ)`.
pub fn second_moment_objective(mu: &DiscreteMeasure, target: &DMatrix<f64>) -> f64 {
    (mu.second_moment_matrix() - target).norm_squared()
}

/// Replaces atom `idx` (mass `w`, position `rω`) by two atoms of mass `w/2`
/// at radii `r_a = r·√(2s)` and `r_b = r·√(2(1−s))`, `s ∈ [0, 1]`, so that
/// `(r_a² + r_b²)/2 = r²`.
pub fn split_atom(mu: &DiscreteMeasure, idx: usize, s: f64) -> Result<DiscreteMeasure> {
    if idx >= mu.len() || !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument("split index or fraction out of range".into()));
    }
    let mut rows = mu.point_rows();
    let mut w = mu.weights().to_vec();
    let x = rows[idx].clone();
    let (fa, fb) = ((2.0 * s).sqrt(), (2.0 * (1.0 - s)).sqrt());
    rows[idx] = x.iter().map(|v| v * fa).collect();
    rows.push(x.iter().map(|v| v * fb).collect());
    let half = w[idx] / 2.0;
    w[idx] = half;
    w.push(half);
    DiscreteMeasure::from_rows(&rows, w)
}

/// `√(2 + M) > 2`: the non-spectral norm breaks the triangle inequality on
/// the Diracs at `0`, `e₁`, `e₁ + e₂`. Returns `(direct, via_e1)`.
pub fn nonspectral_triangle(m: f64) -> Result<(f64, f64)> {
    let norm = NormSpec::nonspectral(m)?;
    let (a, b, c) = ([0.0, 0.0], [1.0, 0.0], [1.0, 1.0]);
    let direct = crate::psd_norms::pointwise_cost(&a, &c, norm)?;
    let via = crate::psd_norms::pointwise_cost(&a, &b, norm)? + crate::psd_norms::pointwise_cost(&b, &c, norm)?;
    Ok((direct, via))
}

#[cfg(test)]
mod tests;
