//! Discrete and Gaussian probability measures, couplings between discrete
//! measures, and the displacement covariance of a coupling.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::psd_norms::PsdMatrix;

const WEIGHT_CLAMP: f64 = 1e-15;
const WEIGHT_SUM_TOL: f64 = 1e-9;
pub const MARGINAL_TOL: f64 = 1e-9;

/// A weighted point cloud `Σ aᵢ δ_{xᵢ}` on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct DiscreteMeasure {
    points: DMatrix<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl TryFrom<MeasureJson> for DiscreteMeasure {
    type Error = Error;
    fn try_from(j: MeasureJson) -> Result<Self> {
        match j.weights {
            Some(w) => DiscreteMeasure::from_rows(&j.points, w),
            None => DiscreteMeasure::uniform_from_rows(&j.points),
        }
    }
}

impl From<DiscreteMeasure> for MeasureJson {
    fn from(m: DiscreteMeasure) -> Self {
        MeasureJson {
            points: m.point_rows(),
            weights: Some(m.weights),
        }
    }
}

impl DiscreteMeasure {
    /// `points` is `n×d` (one atom per row). Weights below `1e−15` are
    /// dropped to zero and the rest renormalized.
    pub fn new(points: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if weights.len() != n {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} atoms",
                weights.len(),
                n
            )));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("measure support"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, expected 1")));
        }
        let clamped: Vec<f64> = weights
            .iter()
            .map(|&w| if w < WEIGHT_CLAMP { 0.0 } else { w })
            .collect();
        let total: f64 = clamped.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("all weights vanish".into()));
        }
        let weights = clamped.into_iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        Self::new(rows_to_matrix(rows)?, weights)
    }

    pub fn uniform_from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::uniform(rows_to_matrix(rows)?)
    }

    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::from_rows(&[x.to_vec()], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    pub fn point_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when all weights equal `1/n` within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= tol)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (i, w) in self.weights.iter().enumerate() {
            m += self.points.row(i).transpose() * *w;
        }
        m
    }

    /// `∫ x xᵀ dμ`.
    pub fn second_moment_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut s = DMatrix::zeros(d, d);
        for (i, w) in self.weights.iter().enumerate() {
            let x = self.points.row(i).transpose();
            s += (&x * x.transpose()) * *w;
        }
        s
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidMeasure("measure has no atoms".into()));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("atoms of unequal dimension".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

/// A transport plan `P ≥ 0` with `P 1 = a`, `Pᵀ 1 = b`.
#[derive(Debug, Clone)]
pub struct Coupling {
    source: Arc<DiscreteMeasure>,
    target: Arc<DiscreteMeasure>,
    plan: DMatrix<f64>,
}

impl Coupling {
    pub fn new(
        source: Arc<DiscreteMeasure>,
        target: Arc<DiscreteMeasure>,
        plan: DMatrix<f64>,
    ) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch(format!(
                "source lives in R^{} and target in R^{}",
                source.dim(),
                target.dim()
            )));
        }
        if plan.nrows() != source.len() || plan.ncols() != target.len() {
            return Err(Error::InvalidCoupling(format!(
                "plan is {}x{} but supports have {} and {} atoms",
                plan.nrows(),
                plan.ncols(),
                source.len(),
                target.len()
            )));
        }
        if plan.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coupling plan"));
        }
        if plan.iter().any(|&x| x < -MARGINAL_TOL) {
            return Err(Error::InvalidCoupling("negative plan entry".into()));
        }
        let plan = plan.map(|x| x.max(0.0));
        let c = Self { source, target, plan };
        let (row, col) = c.marginal_residuals();
        if row > MARGINAL_TOL || col > MARGINAL_TOL {
            return Err(Error::InvalidCoupling(format!(
                "marginal residuals {row:e} (rows) and {col:e} (columns) exceed {MARGINAL_TOL:e}"
            )));
        }
        Ok(c)
    }

    pub fn source(&self) -> &Arc<DiscreteMeasure> {
        &self.source
    }

    pub fn target(&self) -> &Arc<DiscreteMeasure> {
        &self.target
    }

    pub fn plan(&self) -> &DMatrix<f64> {
        &self.plan
    }

    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.plan.nrows()).map(|i| self.plan.row(i).sum()).collect()
    }

    pub fn col_marginal(&self) -> Vec<f64> {
        (0..self.plan.ncols()).map(|j| self.plan.column(j).sum()).collect()
    }

    /// Max-abs deviation of the row and column sums from the weights.
    pub fn marginal_residuals(&self) -> (f64, f64) {
        let row = self
            .row_marginal()
            .iter()
            .zip(self.source.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let col = self
            .col_marginal()
            .iter()
            .zip(self.target.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        (row, col)
    }

    /// Nonzero entries `(i, j, mass)` in row-major order.
    pub fn sparse_entries(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.plan.nrows() {
            for j in 0..self.plan.ncols() {
                let m = self.plan[(i, j)];
                if m > threshold {
                    out.push((i, j, m));
                }
            }
        }
        out
    }

    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.plan.nrows())
            .map(|i| self.plan.row(i).iter().copied().collect())
            .collect()
    }

    /// Convex combination `Σ λ_k P_k` of plans sharing the same supports.
    pub fn mixture(parts: &[(f64, &Coupling)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidCoupling("empty mixture".into()))?
            .1;
        let mut plan = DMatrix::zeros(first.plan.nrows(), first.plan.ncols());
        for (w, c) in parts {
            if !Arc::ptr_eq(&c.source, &first.source) && *c.source != *first.source {
                return Err(Error::InvalidCoupling("mixture over different sources".into()));
            }
            if !Arc::ptr_eq(&c.target, &first.target) && *c.target != *first.target {
                return Err(Error::InvalidCoupling("mixture over different targets".into()));
            }
            plan += &c.plan * *w;
        }
        Self::new(first.source.clone(), first.target.clone(), plan)
    }
}

/// `Σ_ij P_ij (y_j − x_i)(y_j − x_i)ᵀ`.
pub fn displacement_covariance(c: &Coupling) -> Result<PsdMatrix> {
    PsdMatrix::from_matrix(displacement_covariance_raw(c.source(), c.target(), c.plan())?)
}

pub(crate) fn displacement_covariance_raw(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    plan: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(format!(
            "source lives in R^{} and target in R^{}",
            source.dim(),
            target.dim()
        )));
    }
    let d = source.dim();
    let mut s = DMatrix::zeros(d, d);
    let mut delta = vec![0.0; d];
    for i in 0..plan.nrows() {
        for j in 0..plan.ncols() {
            let w = plan[(i, j)];
            if w == 0.0 {
                continue;
            }
            for (k, dk) in delta.iter_mut().enumerate() {
                *dk = target.points[(j, k)] - source.points[(i, k)];
            }
            for a in 0..d {
                for b in a..d {
                    s[(a, b)] += w * delta[a] * delta[b];
                }
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            s[(a, b)] = s[(b, a)];
        }
    }
    Ok(s)
}

pub fn product_coupling(source: &Arc<DiscreteMeasure>, target: &Arc<DiscreteMeasure>) -> Result<Coupling> {
    let a = source.weights();
    let b = target.weights();
    let plan = DMatrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j]);
    Coupling::new(source.clone(), target.clone(), plan)
}

/// The diagonal plan of a measure with itself.
pub fn identity_coupling(measure: &Arc<DiscreteMeasure>) -> Result<Coupling> {
    let w = measure.weights();
    let plan = DMatrix::from_fn(w.len(), w.len(), |i, j| if i == j { w[i] } else { 0.0 });
    Coupling::new(measure.clone(), measure.clone(), plan)
}

/// Plan sending atom `i` to atom `perm[i]`, both measures uniform with equal size.
pub fn permutation_coupling(
    source: &Arc<DiscreteMeasure>,
    target: &Arc<DiscreteMeasure>,
    perm: &[usize],
) -> Result<Coupling> {
    let n = source.len();
    if target.len() != n || perm.len() != n {
        return Err(Error::InvalidCoupling(format!(
            "permutation coupling needs equal sizes, got {}, {} and a permutation of length {}",
            n,
            target.len(),
            perm.len()
        )));
    }
    if !source.is_uniform(1e-12) || !target.is_uniform(1e-12) {
        return Err(Error::InvalidCoupling("permutation coupling needs uniform weights".into()));
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n || seen[j] {
            return Err(Error::InvalidCoupling(format!("{perm:?} is not a permutation")));
        }
        seen[j] = true;
    }
    let mut plan = DMatrix::zeros(n, n);
    for (i, &j) in perm.iter().enumerate() {
        plan[(i, j)] = 1.0 / n as f64;
    }
    Coupling::new(source.clone(), target.clone(), plan)
}

/// `𝒩(m, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianJson", into = "GaussianJson")]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: PsdMatrix,
}

#[derive(Serialize, Deserialize)]
struct GaussianJson {
    mean: Vec<f64>,
    cov: PsdMatrix,
}

impl TryFrom<GaussianJson> for GaussianMeasure {
    type Error = Error;
    fn try_from(j: GaussianJson) -> Result<Self> {
        GaussianMeasure::new(DVector::from_vec(j.mean), j.cov)
    }
}

impl From<GaussianMeasure> for GaussianJson {
    fn from(g: GaussianMeasure) -> Self {
        GaussianJson {
            mean: g.mean.iter().copied().collect(),
            cov: g.cov,
        }
    }
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: PsdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {} with a {}x{} covariance",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("Gaussian mean"));
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: PsdMatrix) -> Self {
        let d = cov.dim();
        Self { mean: DVector::zeros(d), cov }
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Ok(Self::centered(PsdMatrix::from_matrix(DMatrix::identity(d, d) * variance)?))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &PsdMatrix {
        &self.cov
    }

    /// `n` i.i.d. samples as an `n×d` matrix.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        let root = psd_sqrt(self.cov.matrix())?;
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &self.mean + &root * z;
            out.set_row(i, &x.transpose());
        }
        Ok(out)
    }
}
