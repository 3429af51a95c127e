//! Covariance cost between Gaussian laws.
//!
//! For `μ_i = 𝒩(m_i, Σ_i)` the spectral cost reduces to
//!
//! ```text
//! B_γ² = min_K γ(ΔΔᵀ + Σ₀ + Σ₁ − K − Kᵀ),   [[Σ₀, K], [Kᵀ, Σ₁]] ⪰ 0
//! ```
//!
//! The feasible set is parameterized as `K = Σ₀^{1/2} C Σ₁^{1/2}` with
//! `‖C‖_op ≤ 1` and the objective is minimized by projected gradient on `C`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, psd_sqrt, spd_inverse, symmetrize, Svd, SymEigen};
use crate::measures::GaussianMeasure;
use crate::psd_norms::{active_dual_raw, gamma_matrix, NormSpec, PsdMatrix};

/// Relative residual below which a Gaussian coupling counts as deterministic.
pub const DETERMINISM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOptions {
    pub max_iters: usize,
    /// Stop when the relative decrease over `window` accepted steps falls below this.
    pub stall_tol: f64,
    pub window: usize,
}

impl Default for GaussianOptions {
    fn default() -> Self {
        Self { max_iters: 5000, stall_tol: 1e-10, window: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianCostSolution {
    pub norm: NormSpec,
    pub value_sq: f64,
    #[serde(with = "crate::io::dmatrix_rows")]
    pub k_star: DMatrix<f64>,
    #[serde(with = "crate::io::dmatrix_rows")]
    pub contraction: DMatrix<f64>,
    pub displacement_cov: PsdMatrix,
    pub deterministic: bool,
    pub determinism_residual: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl GaussianCostSolution {
    pub fn value(&self) -> f64 {
        self.value_sq.max(0.0).sqrt()
    }

    /// The optimal joint covariance `[[Σ₀, K], [Kᵀ, Σ₁]]`.
    pub fn block_covariance(&self, mu0: &GaussianMeasure, mu1: &GaussianMeasure) -> DMatrix<f64> {
        let d = mu0.dim();
        let mut g = DMatrix::zeros(2 * d, 2 * d);
        g.view_mut((0, 0), (d, d)).copy_from(mu0.cov().matrix());
        g.view_mut((d, d), (d, d)).copy_from(mu1.cov().matrix());
        g.view_mut((0, d), (d, d)).copy_from(&self.k_star);
        g.view_mut((d, 0), (d, d)).copy_from(&self.k_star.transpose());
        g
    }
}

struct Problem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    base: DMatrix<f64>,
    norm: NormSpec,
}

impl Problem {
    fn new(mu0: &GaussianMeasure, mu1: &GaussianMeasure, norm: NormSpec) -> Result<Self> {
        if mu0.dim() != mu1.dim() {
            return Err(Error::DimensionMismatch(format!(
                "Gaussians of dimension {} and {}",
                mu0.dim(),
                mu1.dim()
            )));
        }
        let delta = mu1.mean() - mu0.mean();
        let base = &delta * delta.transpose() + mu0.cov().matrix() + mu1.cov().matrix();
        Ok(Self {
            a: psd_sqrt(mu0.cov().matrix())?,
            b: psd_sqrt(mu1.cov().matrix())?,
            base,
            norm,
        })
    }

    fn k_of(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a * c * &self.b
    }

    fn sigma(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.k_of(c);
        symmetrize(&(&self.base - &k - k.transpose()))
    }

    fn objective(&self, c: &DMatrix<f64>) -> Result<f64> {
        gamma_matrix(&self.sigma(c), self.norm)
    }

    fn dual_value(&self, q: &DMatrix<f64>) -> Result<f64> {
        let m = &self.b * q * &self.a;
        let nuclear: f64 = Svd::new(&m)?.sigma.iter().sum();
        Ok(crate::linalg::frobenius_inner(q, &self.base) - 2.0 * nuclear)
    }
}

/// `tr(Q(ΔΔᵀ+Σ₀+Σ₁)) − 2‖Σ₁^{1/2} Q Σ₀^{1/2}‖_*`, the cost at `Q` minimized over
/// cross-covariances. Any `Q ∈ K_γ` gives a lower bound on `B_γ²`.
pub fn gaussian_dual_value(mu0: &GaussianMeasure, mu1: &GaussianMeasure, q: &DMatrix<f64>) -> Result<f64> {
    let prob = Problem::new(mu0, mu1, NormSpec::trace())?;
    if q.nrows() != mu0.dim() || q.ncols() != mu0.dim() {
        return Err(Error::DimensionMismatch("dual matrix size".into()));
    }
    prob.dual_value(q)
}

/// Projection onto the operator-norm unit ball: singular values clipped at 1.
pub fn project_contraction(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = Svd::new(c)?;
    if svd.sigma.iter().all(|&s| s <= 1.0) {
        return Ok(c.clone());
    }
    Ok(svd.rebuild(|_| true, |s| s.min(1.0)))
}

/// The orthogonal factor `V Uᵀ` of `M = U Σ Vᵀ`, the maximizer of `tr(C M)` over contractions.
fn polar_maximizer(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = m.nrows();
    let svd = m
        .clone()
        .try_svd(true, true, 5.0 * f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("svd did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Eigen("svd returned no U".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Eigen("svd returned no V".into()))?;
    let out = v_t.transpose() * u.transpose();
    debug_assert_eq!(out.nrows(), d);
    Ok(out)
}

/// `B_γ(μ₀, μ₁)²` with the minimizing cross-covariance.
pub fn gaussian_cost(
    mu0: &GaussianMeasure,
    mu1: &GaussianMeasure,
    norm: NormSpec,
    opts: &GaussianOptions,
) -> Result<GaussianCostSolution> {
    let p = norm.require_schatten("gaussian_cost")?;
    if opts.max_iters == 0 || opts.window == 0 || opts.stall_tol.is_nan() || opts.stall_tol < 0.0 {
        return Err(Error::InvalidArgument("gaussian options out of range".into()));
    }
    let prob = Problem::new(mu0, mu1, norm)?;
    let bures_c = polar_maximizer(&(&prob.b * &prob.a))?;

    if p == 1.0 {
        let value = prob.objective(&bures_c)?;
        return finish(&prob, mu0, mu1, bures_c, value, 0, true);
    }

    let d = mu0.dim();
    let mut best: Option<(DMatrix<f64>, f64, usize, bool)> = None;
    for start in [bures_c, DMatrix::identity(d, d)] {
        let (c, v, iters, conv) = projected_gradient(&prob, start, opts)?;
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((c, v, iters, conv));
        }
    }
    let (c, value, iters, conv) = best.expect("at least one start");
    finish(&prob, mu0, mu1, c, value, iters, conv)
}

/// Smoothed surrogate of `γ` and its gradient. For `p = ∞` the top eigenvalue is
/// replaced by `μ log Σ exp(λ_i/μ)`; finite `p` uses `γ` itself.
fn surrogate(prob: &Problem, c: &DMatrix<f64>, mu: f64) -> Result<(f64, DMatrix<f64>)> {
    let s = prob.sigma(c);
    if mu <= 0.0 {
        let q = active_dual_raw(&s, prob.norm)?;
        return Ok((gamma_matrix(&s, prob.norm)?, q));
    }
    let eig = SymEigen::new(&s)?;
    let top = eig.max_value();
    let w: Vec<f64> = eig.values.iter().map(|l| ((l - top) / mu).exp()).collect();
    let z: f64 = w.iter().sum();
    let value = top + mu * z.ln();
    let weights: Vec<f64> = w.iter().map(|x| x / z).collect();
    Ok((value, eig.rebuild(&weights)))
}

fn projected_gradient(
    prob: &Problem,
    mut c: DMatrix<f64>,
    opts: &GaussianOptions,
) -> Result<(DMatrix<f64>, f64, usize, bool)> {
    let scale = gamma_matrix(&symmetrize(&(prob.a.pow(2) + prob.b.pow(2))), prob.norm)?;
    let mut best_value = prob.objective(&c)?;
    if scale <= 0.0 {
        return Ok((c, best_value, 0, true));
    }
    let mut best_c = c.clone();
    let smoothing: Vec<f64> = if prob.norm.exponent() == Some(f64::INFINITY) {
        (2..=12).map(|k| scale * 10f64.powi(-k)).collect()
    } else {
        vec![0.0]
    };
    let eta0 = 1e-1 / scale;
    let budget = opts.max_iters.div_ceil(smoothing.len());
    let mut iters = 0;
    let mut converged = false;
    for &mu in &smoothing {
        let mut eta = eta0;
        let (mut value, mut q) = surrogate(prob, &c, mu)?;
        let mut history = vec![value];
        converged = false;
        for _ in 0..budget {
            iters += 1;
            let grad = (&prob.a * &q * &prob.b) * -2.0;
            let mut accepted = false;
            while eta > 1e-18 * eta0 {
                let cand = project_contraction(&(&c - &grad * eta))?;
                let (v, qc) = surrogate(prob, &cand, mu)?;
                if v < value {
                    c = cand;
                    value = v;
                    q = qc;
                    accepted = true;
                    eta *= 2.0;
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                converged = true;
                break;
            }
            let exact = prob.objective(&c)?;
            if exact < best_value {
                best_value = exact;
                best_c = c.clone();
            }
            history.push(value);
            if history.len() > opts.window {
                let old = history[history.len() - 1 - opts.window];
                if old - value <= opts.stall_tol * old.abs().max(1e-300) {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok((best_c, best_value, iters, converged))
}

fn finish(
    prob: &Problem,
    mu0: &GaussianMeasure,
    mu1: &GaussianMeasure,
    c: DMatrix<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
) -> Result<GaussianCostSolution> {
    let k = prob.k_of(&c);
    let disp = prob.sigma(&c);
    let displacement_cov = PsdMatrix::from_matrix(clip_negative(&disp)?)?;
    let residual = determinism_residual(mu0, mu1, &k).ok();
    Ok(GaussianCostSolution {
        norm: prob.norm,
        value_sq: value,
        k_star: k,
        contraction: c,
        displacement_cov,
        deterministic: residual.is_some_and(|r| r <= DETERMINISM_TOL),
        determinism_residual: residual,
        iterations,
        converged,
    })
}

fn clip_negative(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m)?;
    if eig.min_value() >= 0.0 {
        return Ok(m.clone());
    }
    Ok(eig.map(|l| l.max(0.0)))
}

/// `‖Σ₁ − KᵀΣ₀⁻¹K‖_F / ‖Σ₁‖_F`; zero exactly when the coupling is induced by an affine map.
pub fn determinism_residual(mu0: &GaussianMeasure, mu1: &GaussianMeasure, k: &DMatrix<f64>) -> Result<f64> {
    let inv = spd_inverse(mu0.cov().matrix(), "source covariance")?;
    let s1 = mu1.cov().matrix();
    let r = frobenius(&(s1 - k.transpose() * inv * k));
    let n = frobenius(s1);
    Ok(if n > 0.0 { r / n } else { r })
}

/// `γ_p((Σ₀^{1/2} − Σ₁^{1/2})²)` for commuting covariances.
pub fn commuting_closed_form(s0: &PsdMatrix, s1: &PsdMatrix, p: f64) -> Result<f64> {
    let norm = NormSpec::schatten(p)?;
    if s0.dim() != s1.dim() {
        return Err(Error::DimensionMismatch("covariances of different size".into()));
    }
    let (a, b) = (s0.matrix(), s1.matrix());
    let residual = frobenius(&(a * b - b * a));
    let tolerance = 1e-8 * frobenius(a) * frobenius(b);
    if residual > tolerance {
        return Err(Error::NonCommuting { residual, tolerance });
    }
    // (√Σ₀ − √Σ₁)² is diagonal in any common eigenbasis
    let diff = psd_sqrt(a)? - psd_sqrt(b)?;
    let sq = symmetrize(&(&diff * &diff));
    gamma_matrix(&sq, norm)
}

/// `tr Σ₀ + tr Σ₁ − 2 tr((Σ₀^{1/2} Σ₁ Σ₀^{1/2})^{1/2})`.
pub fn bures_classical(s0: &PsdMatrix, s1: &PsdMatrix) -> Result<f64> {
    if s0.dim() != s1.dim() {
        return Err(Error::DimensionMismatch("covariances of different size".into()));
    }
    let r = psd_sqrt(s0.matrix())?;
    let inner = symmetrize(&(&r * s1.matrix() * &r));
    let cross = psd_sqrt(&inner)?.trace();
    Ok((s0.trace() + s1.trace() - 2.0 * cross).max(0.0))
}

/// An affine map `x ↦ A x + b` pushing `μ₀` to `μ₁` that induces the optimal coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BrenierOutcome {
    Map(AffineMap),
    /// The coupling is not induced by a map; carries the relative residual.
    NotDeterministic(f64),
}

/// `T(x) = m₁ + KᵀΣ₀⁻¹(x − m₀)` when the optimal coupling is deterministic.
pub fn brenier_map_from_solution(
    sol: &GaussianCostSolution,
    mu0: &GaussianMeasure,
    mu1: &GaussianMeasure,
) -> Result<BrenierOutcome> {
    let inv = spd_inverse(mu0.cov().matrix(), "source covariance")?;
    let residual = determinism_residual(mu0, mu1, &sol.k_star)?;
    if residual > DETERMINISM_TOL {
        return Ok(BrenierOutcome::NotDeterministic(residual));
    }
    let a = sol.k_star.transpose() * inv;
    let b = mu1.mean() - &a * mu0.mean();
    let push = &a * mu0.cov().matrix() * a.transpose();
    let s1 = mu1.cov().matrix();
    let err = frobenius(&(push - s1));
    if err > DETERMINISM_TOL * frobenius(s1).max(1.0) {
        return Err(Error::Solver(format!("pushforward covariance mismatch {err:e}")));
    }
    Ok(BrenierOutcome::Map(AffineMap { a, b }))
}

/// Point on the Gaussian geodesic: mean `(1−t)m₀ + t m₁`, covariance
/// `[(1−t)I tI] Γ [(1−t)I tI]ᵀ`.
pub fn gaussian_interpolate(
    sol: &GaussianCostSolution,
    mu0: &GaussianMeasure,
    mu1: &GaussianMeasure,
    t: f64,
) -> Result<GaussianMeasure> {
    let s = 1.0 - t;
    let mean = mu0.mean() * s + mu1.mean() * t;
    let k = &sol.k_star;
    let cov = mu0.cov().matrix() * (s * s) + mu1.cov().matrix() * (t * t) + (k + k.transpose()) * (s * t);
    GaussianMeasure::new(mean, PsdMatrix::from_matrix(clip_negative(&symmetrize(&cov))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> PsdMatrix {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(rng));
        let m: DMatrix<f64> = &g * g.transpose() + DMatrix::identity(d, d) * 0.1;
        PsdMatrix::from_matrix(symmetrize(&m)).unwrap()
    }

    fn centered(cov: PsdMatrix) -> GaussianMeasure {
        GaussianMeasure::centered(cov)
    }

    #[test]
    fn isotropic_pair() {
        let (alpha, beta) = (1.0, 4.0);
        for p in [1.0, 2.0, 3.0, f64::INFINITY] {
            let mu0 = GaussianMeasure::isotropic(2, alpha).unwrap();
            let mu1 = GaussianMeasure::isotropic(2, beta).unwrap();
            let sol = gaussian_cost(&mu0, &mu1, NormSpec::schatten(p).unwrap(), &GaussianOptions::default()).unwrap();
            let expect = 2f64.powf(1.0 / p) * (alpha.sqrt() - beta.sqrt()).powi(2);
            assert_relative_eq!(sol.value_sq, expect, epsilon = 1e-9);
            assert_relative_eq!(sol.displacement_cov.matrix()[(0, 0)], 1.0, epsilon = 1e-9);
            assert!(sol.deterministic);
        }
    }

    #[test]
    fn identical_and_mean_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cov = random_spd(&mut rng, 3);
        let mu0 = centered(cov.clone());
        for p in [2.0, f64::INFINITY] {
            let norm = NormSpec::schatten(p).unwrap();
            let sol = gaussian_cost(&mu0, &mu0, norm, &GaussianOptions::default()).unwrap();
            assert!(sol.value_sq.abs() < 1e-9, "{}", sol.value_sq);
            assert!((&sol.k_star - cov.matrix()).amax() < 1e-6);
            let shifted = GaussianMeasure::new(DVector::from_vec(vec![1.0, -2.0, 2.0]), cov.clone()).unwrap();
            let sol = gaussian_cost(&mu0, &shifted, norm, &GaussianOptions::default()).unwrap();
            assert_relative_eq!(sol.value_sq, 9.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn commuting_examples() {
        let a = PsdMatrix::diagonal(&[1.0, 4.0]).unwrap();
        let b = PsdMatrix::diagonal(&[4.0, 1.0]).unwrap();
        assert_relative_eq!(commuting_closed_form(&a, &b, 1.0).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(commuting_closed_form(&a, &b, 2.0).unwrap(), 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(commuting_closed_form(&a, &b, f64::INFINITY).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(commuting_closed_form(&a, &a, 2.0).unwrap(), 0.0);
        let c = PsdMatrix::diagonal(&[9.0, 1.0]).unwrap();
        let i = PsdMatrix::identity(2);
        assert_relative_eq!(commuting_closed_form(&c, &i, 1.0).unwrap(), 4.0, epsilon = 1e-14);
        assert_relative_eq!(bures_classical(&c, &i).unwrap(), 4.0, epsilon = 1e-12);
        let nc = PsdMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!(matches!(commuting_closed_form(&c, &nc, 2.0), Err(Error::NonCommuting { .. })));
    }

    #[test]
    fn bures_examples() {
        let a = PsdMatrix::identity(2).scaled(2.0).unwrap();
        let b = PsdMatrix::identity(2).scaled(5.0).unwrap();
        assert_relative_eq!(bures_classical(&a, &b).unwrap(), 2.0 * (2f64.sqrt() - 5f64.sqrt()).powi(2), epsilon = 1e-12);
        assert!(bures_classical(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn trace_case_matches_bures_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (s0, s1) = (random_spd(&mut rng, 3), random_spd(&mut rng, 3));
            let sol = gaussian_cost(&centered(s0.clone()), &centered(s1.clone()), NormSpec::trace(), &GaussianOptions::default())
                .unwrap();
            assert!((sol.value_sq - bures_classical(&s0, &s1).unwrap()).abs() < 1e-8);
        }
    }

    /// `max_{Q ∈ K_p} g(Q)` for `d = 2` by a zooming grid over rotation angle and eigenvalue split.
    fn dual_grid_oracle(mu0: &GaussianMeasure, mu1: &GaussianMeasure, p: f64) -> f64 {
        let q = crate::psd_norms::dual_exponent(p);
        let eval = |theta: f64, phi: f64| {
            let (c, s) = (theta.cos(), theta.sin());
            let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            let lam = [(phi.cos().powi(2)).powf(1.0 / q), (phi.sin().powi(2)).powf(1.0 / q)];
            let m = &r * DMatrix::from_diagonal(&DVector::from_vec(lam.to_vec())) * r.transpose();
            gaussian_dual_value(mu0, mu1, &m).unwrap()
        };
        let (mut th, mut ph) = (0.0, 0.0);
        let mut best = f64::NEG_INFINITY;
        let n = 48;
        for i in 0..n {
            for j in 0..=n {
                let (t, f) = (std::f64::consts::PI * i as f64 / n as f64, std::f64::consts::FRAC_PI_2 * j as f64 / n as f64);
                let v = eval(t, f);
                if v > best {
                    best = v;
                    th = t;
                    ph = f;
                }
            }
        }
        let (mut wt, mut wp) = (std::f64::consts::PI / n as f64, std::f64::consts::FRAC_PI_2 / n as f64);
        for _ in 0..45 {
            let (ct, cp) = (th, ph);
            for i in -2..=2 {
                for j in -2..=2 {
                    let t = ct + wt * i as f64 / 2.0;
                    let f = (cp + wp * j as f64 / 2.0).clamp(0.0, std::f64::consts::FRAC_PI_2);
                    let v = eval(t, f);
                    if v > best {
                        best = v;
                        th = t;
                        ph = f;
                    }
                }
            }
            wt *= 0.6;
            wp *= 0.6;
        }
        best
    }

    #[test]
    fn primal_meets_dual_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..6 {
            let (s0, s1) = (random_spd(&mut rng, 2), random_spd(&mut rng, 2));
            let mu0 = centered(s0);
            let mu1 = GaussianMeasure::new(DVector::from_vec(vec![0.3, -0.2]), s1).unwrap();
            for p in [2.0, f64::INFINITY] {
                let sol = gaussian_cost(&mu0, &mu1, NormSpec::schatten(p).unwrap(), &GaussianOptions::default()).unwrap();
                let lower = dual_grid_oracle(&mu0, &mu1, p);
                assert!(lower <= sol.value_sq + 1e-9, "p={p} weak duality {lower} > {}", sol.value_sq);
                let rel = (sol.value_sq - lower) / sol.value_sq;
                assert!(rel < 1e-5, "p={p} value {} oracle {lower} rel {rel:e}", sol.value_sq);
                assert!(sol.contraction.clone().svd(false, false).singular_values.max() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn brenier_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (s0, s1) = (random_spd(&mut rng, 2), random_spd(&mut rng, 2));
        let mu0 = centered(s0.clone());
        let mu1 = GaussianMeasure::new(DVector::from_vec(vec![1.0, 0.5]), s1.clone()).unwrap();
        let sol = gaussian_cost(&mu0, &mu1, NormSpec::trace(), &GaussianOptions::default()).unwrap();
        let BrenierOutcome::Map(map) = brenier_map_from_solution(&sol, &mu0, &mu1).unwrap() else {
            panic!("expected a map");
        };
        let push = &map.a * s0.matrix() * map.a.transpose();
        assert!((push - s1.matrix()).amax() < 1e-8);

        let sol = gaussian_cost(&mu0, &mu0, NormSpec::frobenius(), &GaussianOptions::default()).unwrap();
        let BrenierOutcome::Map(map) = brenier_map_from_solution(&sol, &mu0, &mu0).unwrap() else {
            panic!("expected a map");
        };
        assert!((map.a - DMatrix::identity(2, 2)).amax() < 1e-6);

        let d0 = centered(PsdMatrix::diagonal(&[1.0, 4.0]).unwrap());
        let d1 = centered(PsdMatrix::diagonal(&[9.0, 1.0]).unwrap());
        let sol = gaussian_cost(&d0, &d1, NormSpec::operator(), &GaussianOptions::default()).unwrap();
        let BrenierOutcome::Map(map) = brenier_map_from_solution(&sol, &d0, &d1).unwrap() else {
            panic!("expected a map");
        };
        assert_relative_eq!(map.a[(0, 0)], 3.0, epsilon = 1e-8);
        assert_relative_eq!(map.a[(1, 1)], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn singular_source_rejected_for_map() {
        let mu0 = centered(PsdMatrix::diagonal(&[1.0, 0.0]).unwrap());
        let mu1 = centered(PsdMatrix::identity(2));
        let sol = gaussian_cost(&mu0, &mu1, NormSpec::frobenius(), &GaussianOptions::default()).unwrap();
        assert!(matches!(brenier_map_from_solution(&sol, &mu0, &mu1), Err(Error::Singular(_))));
        assert!(sol.determinism_residual.is_none());
    }
}
