//! The static spectral transport problem between discrete measures
//!
//! ```text
//! W_γ(μ,ν)² = min_{π ∈ Π(μ,ν)} γ(∫ (y−x)(y−x)ᵀ dπ) = max_{Q ∈ K_γ} W_Q(μ,ν)²
//! ```
//!
//! where `W_Q²` is ordinary transport with the quadratic cost
//! `(y−x)ᵀ Q (y−x)`. The inner problem is an exact LP; the outer
//! maximization over `Q` is a cutting-plane scheme whose restricted master
//! mixes the vertex couplings found so far, which yields both a certified
//! lower bound (the best `W_Q²`) and a primal coupling (the optimal mixture).

mod assignment;
mod master;
mod network_simplex;
mod oracle;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{displacement_covariance_raw, product_coupling, Coupling, DiscreteMeasure};
use crate::par::{map_indexed, Execution};
use crate::psd_norms::{active_dual_raw, dual_exponent, gamma_matrix, DualBallSpec, NormSpec, PsdMatrix};

pub use assignment::solve_assignment;
pub use network_simplex::TransportSimplex;
pub use oracle::{grid_oracle, grid_oracle_with};

/// Which exact method solves the inner linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerSolver {
    /// Network simplex on the bipartite transport graph (warm-started).
    #[default]
    ExactLp,
    /// Hungarian method; used only when `n = m` and both weights are uniform,
    /// otherwise the network simplex is used.
    Assignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_outer_iters: usize,
    /// Relative duality gap at which the outer loop stops.
    pub stop_gap: f64,
    pub inner_solver: InnerSolver,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 500,
            stop_gap: 1e-7,
            inner_solver: InnerSolver::ExactLp,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("max_outer_iters must be positive".into()));
        }
        if !(self.stop_gap > 0.0 && self.stop_gap.is_finite()) {
            return Err(Error::InvalidArgument("stop_gap must be a positive number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StaticSolution {
    pub norm: NormSpec,
    /// Best certified lower bound `max_k W_{Q_k}²`.
    pub value_sq: f64,
    /// `γ(Σ(coupling))`.
    pub upper_bound: f64,
    pub q_star: PsdMatrix,
    pub coupling: Coupling,
    /// `upper_bound − value_sq`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StaticSolution {
    pub fn value(&self) -> f64 {
        self.value_sq.max(0.0).sqrt()
    }

    pub fn relative_gap(&self) -> f64 {
        self.gap / self.upper_bound.abs().max(1e-300)
    }
}

/// Inner transport problem `W_Q²` over fixed marginals, warm-started across calls.
pub struct QuadraticOt {
    source: Arc<DiscreteMeasure>,
    target: Arc<DiscreteMeasure>,
    simplex: Option<TransportSimplex>,
    use_assignment: bool,
    displacements: Vec<f64>,
}

impl QuadraticOt {
    pub fn new(
        source: &Arc<DiscreteMeasure>,
        target: &Arc<DiscreteMeasure>,
        inner: InnerSolver,
    ) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch(format!(
                "source lives in R^{} and target in R^{}",
                source.dim(),
                target.dim()
            )));
        }
        let use_assignment = inner == InnerSolver::Assignment
            && source.len() == target.len()
            && source.is_uniform(1e-12)
            && target.is_uniform(1e-12);
        let (n, m, d) = (source.len(), target.len(), source.dim());
        let mut displacements = vec![0.0; n * m * d];
        for i in 0..n {
            for j in 0..m {
                for k in 0..d {
                    displacements[(i * m + j) * d + k] = target.points()[(j, k)] - source.points()[(i, k)];
                }
            }
        }
        Ok(Self {
            source: source.clone(),
            target: target.clone(),
            simplex: None,
            use_assignment,
            displacements,
        })
    }

    fn cost(&self, q: &DMatrix<f64>) -> Vec<f64> {
        let d = self.source.dim();
        self.displacements
            .chunks_exact(d)
            .map(|delta| {
                let mut c = 0.0;
                for a in 0..d {
                    let mut row = 0.0;
                    for b in 0..d {
                        row += q[(a, b)] * delta[b];
                    }
                    c += delta[a] * row;
                }
                c
            })
            .collect()
    }

    /// Optimal value and plan for the cost `(y_j − x_i)ᵀ Q (y_j − x_i)`.
    pub fn solve(&mut self, q: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let d = self.source.dim();
        if q.nrows() != d || q.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "cost matrix is {}x{}, points live in R^{d}",
                q.nrows(),
                q.ncols()
            )));
        }
        let cost = self.cost(q);
        let (n, m) = (self.source.len(), self.target.len());
        if self.use_assignment {
            let (perm, _) = solve_assignment(&cost, n)?;
            let mut plan = DMatrix::zeros(n, m);
            let mut value = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                plan[(i, j)] = 1.0 / n as f64;
                value += cost[i * m + j] / n as f64;
            }
            return Ok((value, plan));
        }
        if self.simplex.is_none() {
            self.simplex = Some(TransportSimplex::new(self.source.weights(), self.target.weights())?);
        }
        let simplex = self.simplex.as_mut().expect("initialized above");
        let (value, flat) = simplex.solve(&cost)?;
        Ok((value, DMatrix::from_row_slice(n, m, &flat)))
    }

    pub fn coupling(&self, plan: DMatrix<f64>) -> Result<Coupling> {
        Coupling::new(self.source.clone(), self.target.clone(), plan)
    }
}

/// Exact `W_Q(μ,ν)²` and an optimal (vertex) coupling.
pub fn quadratic_ot(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    q: &PsdMatrix,
) -> Result<(f64, Coupling)> {
    quadratic_ot_with(source, target, q, InnerSolver::ExactLp)
}

pub fn quadratic_ot_with(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    q: &PsdMatrix,
    inner: InnerSolver,
) -> Result<(f64, Coupling)> {
    let mut ot = QuadraticOt::new(source, target, inner)?;
    let (value, plan) = ot.solve(q.matrix())?;
    Ok((value, ot.coupling(plan)?))
}

struct Vertex {
    sigma: DMatrix<f64>,
    plan: DMatrix<f64>,
}

/// Computes `W_γ(μ,ν)²` for a Schatten norm.
pub fn spectral_wasserstein(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    norm: NormSpec,
    opts: &SolverOptions,
) -> Result<StaticSolution> {
    opts.validate()?;
    if !norm.is_monotone() {
        return Err(Error::UnsupportedNorm(
            "the static solver optimizes over PSD Schatten dual balls; non-monotone norms are rejected".into(),
        ));
    }
    let p = norm.require_schatten("spectral_wasserstein")?;
    let d = source.dim();
    let mut ot = QuadraticOt::new(source, target, opts.inner_solver)?;

    if p == 1.0 {
        let q = PsdMatrix::identity(d);
        let (_, plan) = ot.solve(q.matrix())?;
        let sigma = displacement_covariance_raw(source, target, &plan)?;
        let value = sigma.trace();
        return Ok(StaticSolution {
            norm,
            value_sq: value,
            upper_bound: value,
            q_star: q,
            coupling: ot.coupling(plan)?,
            gap: 0.0,
            iterations: 1,
            converged: true,
        });
    }

    let product = product_coupling(source, target)?;
    let product_sigma = displacement_covariance_raw(source, target, product.plan())?;
    let q0 = active_dual_raw(&product_sigma, norm)?;
    let q_iso = DMatrix::identity(d, d) * (d as f64).powf(-1.0 / dual_exponent(p));
    let scale = gamma_matrix(&product_sigma, norm)?.max(1e-300);
    let dedupe_tol = 1e-13 * scale;

    let mut vertices: Vec<Vertex> = Vec::new();
    let mut best_lower = f64::NEG_INFINITY;
    let mut best_q = q0.clone();
    let mut weights: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut next_q = q0.clone();
    let mut pending_iso = (&q_iso - &q0).amax() > 1e-14;

    for it in 1..=opts.max_outer_iters {
        iterations = it;
        let q = next_q.clone();
        let (lower, plan) = ot.solve(&q)?;
        if lower > best_lower {
            best_lower = lower;
            best_q = q.clone();
        }
        let sigma = displacement_covariance_raw(source, target, &plan)?;
        let is_new = vertices
            .iter()
            .all(|v| (&v.sigma - &sigma).amax() > dedupe_tol);
        if is_new {
            vertices.push(Vertex { sigma, plan });
        }
        let sigmas: Vec<DMatrix<f64>> = vertices.iter().map(|v| v.sigma.clone()).collect();
        let master = master::solve_master(&sigmas, p)?;
        weights = master.weights;
        let upper = master.upper;
        if upper - best_lower <= opts.stop_gap * upper.abs().max(1e-300) {
            converged = true;
            break;
        }
        if pending_iso {
            pending_iso = false;
            next_q = q_iso.clone();
            continue;
        }
        if !is_new && (master.dual.clone() - &q).amax() <= 1e-14 {
            // the cut at this dual point is already in the model
            break;
        }
        next_q = master.dual;
        prune(&mut vertices, &mut weights, d);
    }

    let n = source.len();
    let m = target.len();
    let mut plan = DMatrix::zeros(n, m);
    let total: f64 = weights.iter().sum();
    for (v, w) in vertices.iter().zip(&weights) {
        plan += &v.plan * (*w / total);
    }
    let coupling = ot.coupling(plan)?;
    let sigma = displacement_covariance_raw(source, target, coupling.plan())?;
    let upper_bound = gamma_matrix(&sigma, norm)?;
    Ok(StaticSolution {
        norm,
        value_sq: best_lower.max(0.0),
        upper_bound,
        q_star: PsdMatrix::from_matrix(best_q)?,
        coupling,
        gap: upper_bound - best_lower.max(0.0),
        iterations,
        converged,
    })
}

/// Drops vertices with negligible mixture weight once the model grows large.
fn prune(vertices: &mut Vec<Vertex>, weights: &mut Vec<f64>, d: usize) {
    let cap = 8 * d * (d + 1) + 20;
    if vertices.len() <= cap {
        return;
    }
    let mut k = 0;
    let keep: Vec<bool> = weights.iter().map(|&w| w > 1e-9).collect();
    vertices.retain(|_| {
        let r = keep[k];
        k += 1;
        r
    });
    weights.retain(|&w| w > 1e-9);
}

/// Largest problem size accepted by [`monge_restricted`].
pub const MONGE_MAX_ATOMS: usize = 10;

/// Minimum of `γ(Σ_σ)` over permutation couplings, by enumeration of all `n!` permutations.
pub fn monge_restricted(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    norm: NormSpec,
) -> Result<(f64, Vec<usize>)> {
    monge_restricted_with(source, target, norm, Execution::best_available())
}

pub fn monge_restricted_with(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    norm: NormSpec,
    exec: Execution,
) -> Result<(f64, Vec<usize>)> {
    let n = source.len();
    if target.len() != n {
        return Err(Error::InvalidArgument(format!(
            "Monge restriction needs equal atom counts, got {} and {}",
            n,
            target.len()
        )));
    }
    if n > MONGE_MAX_ATOMS {
        return Err(Error::TooLarge(format!(
            "{n}! permutations is too many to enumerate (limit {MONGE_MAX_ATOMS} atoms); sample permutations instead"
        )));
    }
    if !source.is_uniform(1e-12) || !target.is_uniform(1e-12) {
        return Err(Error::InvalidArgument("Monge restriction needs uniform weights".into()));
    }
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch("source and target dimensions differ".into()));
    }
    let d = source.dim();
    let dd = d * d;
    let w = 1.0 / n as f64;
    let mut pair = vec![0.0; n * n * dd];
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                for b in 0..d {
                    let da = target.points()[(j, a)] - source.points()[(i, a)];
                    let db = target.points()[(j, b)] - source.points()[(i, b)];
                    pair[(i * n + j) * dd + a * d + b] = w * da * db;
                }
            }
        }
    }
    let branches = map_indexed(n, exec, |first| {
        let mut best = (f64::INFINITY, Vec::new());
        let mut used = vec![false; n];
        let mut perm = vec![0usize; n];
        let mut acc = vec![0.0; (n + 1) * dd];
        used[first] = true;
        perm[0] = first;
        for t in 0..dd {
            acc[dd + t] = pair[first * dd + t];
        }
        enumerate(1, n, d, &pair, &mut used, &mut perm, &mut acc, norm, &mut best)?;
        Ok::<_, Error>(best)
    });
    let mut best = (f64::INFINITY, Vec::new());
    for b in branches {
        let b = b?;
        if b.0 < best.0 {
            best = b;
        }
    }
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    depth: usize,
    n: usize,
    d: usize,
    pair: &[f64],
    used: &mut [bool],
    perm: &mut [usize],
    acc: &mut [f64],
    norm: NormSpec,
    best: &mut (f64, Vec<usize>),
) -> Result<()> {
    let dd = d * d;
    if depth == n {
        let s = &acc[n * dd..(n + 1) * dd];
        let g = gamma_small(s, d, norm)?;
        if g < best.0 {
            *best = (g, perm.to_vec());
        }
        return Ok(());
    }
    for j in 0..n {
        if used[j] {
            continue;
        }
        used[j] = true;
        perm[depth] = j;
        for t in 0..dd {
            acc[(depth + 1) * dd + t] = acc[depth * dd + t] + pair[(depth * n + j) * dd + t];
        }
        enumerate(depth + 1, n, d, pair, used, perm, acc, norm, best)?;
        used[j] = false;
    }
    Ok(())
}

/// `γ` of a small row-major symmetric matrix, closed form in `d = 2`.
fn gamma_small(s: &[f64], d: usize, norm: NormSpec) -> Result<f64> {
    if d == 2 {
        if let NormSpec::Schatten { p } = norm {
            let (a, b, c) = (s[0], s[1], s[3]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let l1 = (mid + rad).max(0.0);
            let l2 = (mid - rad).max(0.0);
            return Ok(crate::linalg::lp_norm(&[l1, l2], p));
        }
    }
    gamma_matrix(&DMatrix::from_row_slice(d, d, s), norm)
}

/// Weak-duality certificate of a static solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateReport {
    /// `tr(Q* Σ(π*))`.
    pub lower: f64,
    /// `γ(Σ(π*))`.
    pub upper: f64,
    /// `upper − lower`.
    pub gap: f64,
    /// `upper − value_sq`, the gap against the certified `W_{Q*}²`.
    pub value_gap: f64,
    pub row_residual: f64,
    pub col_residual: f64,
    pub dual_feasible: bool,
}

pub fn certify(sol: &StaticSolution) -> Result<CertificateReport> {
    let c = &sol.coupling;
    let sigma = displacement_covariance_raw(c.source(), c.target(), c.plan())?;
    let lower = if sol.norm.exponent() == Some(1.0) {
        sigma.trace()
    } else {
        crate::linalg::frobenius_inner(sol.q_star.matrix(), &sigma)
    };
    let upper = gamma_matrix(&sigma, sol.norm)?;
    let (row_residual, col_residual) = c.marginal_residuals();
    let dual_feasible = DualBallSpec::new(sol.norm)?.contains(sol.q_star.sym(), 1e-10)?;
    Ok(CertificateReport {
        lower,
        upper,
        gap: upper - lower,
        value_gap: upper - sol.value_sq,
        row_residual,
        col_residual,
        dual_feasible,
    })
}

/// One matched pair per source atom: the row-wise argmax of the plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub source_idx: usize,
    pub target_idx: usize,
    pub mass: f64,
    /// Another column in the same row carries (numerically) the same mass.
    pub tie: bool,
}

pub fn matched_pairs(c: &Coupling) -> Vec<MatchedPair> {
    let plan = c.plan();
    (0..plan.nrows())
        .map(|i| {
            let row = plan.row(i);
            let (mut arg, mut best) = (0, f64::NEG_INFINITY);
            for (j, &x) in row.iter().enumerate() {
                if x > best {
                    best = x;
                    arg = j;
                }
            }
            let tol = 1e-12 * best.abs().max(1e-300);
            let tie = row.iter().enumerate().any(|(j, &x)| j != arg && (x - best).abs() <= tol);
            MatchedPair {
                source_idx: i,
                target_idx: arg,
                mass: best,
                tie,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
