//! Norms on the positive semidefinite cone and their representing sets.
//!
//! A norm `γ` on PSD matrices is described by [`NormSpec`]. The Schatten
//! family is represented by the PSD dual-norm balls
//! `K_p = {Q ⪰ 0 : ‖Q‖_{S_q} ≤ 1}` (with `K_1 = {Id}`), which is what the
//! static solver, the Gaussian solver and the flows optimize over. The
//! non-spectral entrywise norm is kept only as a counterexample: it has no
//! PSD representing set here.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lp_norm, symmetrize, SymEigen};

/// Relative tolerance used to decide that two top eigenvalues are tied.
const TIE_TOL: f64 = 1e-10;

/// Dense symmetric matrix. Construction symmetrizes its input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixInput", into = "MatrixJson")]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

#[derive(Serialize)]
struct MatrixJson {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

/// Either `{"dim": d, "rows": [...]}` or a bare list of rows.
#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixInput {
    Full { dim: usize, rows: Vec<Vec<f64>> },
    Rows(Vec<Vec<f64>>),
}

impl TryFrom<MatrixInput> for SymMatrix {
    type Error = Error;
    fn try_from(j: MatrixInput) -> Result<Self> {
        let (dim, rows) = match j {
            MatrixInput::Full { dim, rows } => (dim, rows),
            MatrixInput::Rows(rows) => (rows.len(), rows),
        };
        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "matrix declared dim {dim} but rows do not form a square"
            )));
        }
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for MatrixJson {
    fn from(m: SymMatrix) -> Self {
        MatrixJson {
            dim: m.dim(),
            rows: m.to_rows(),
        }
    }
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        Ok(Self { inner: symmetrize(&m) })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("rows do not form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self { inner: DMatrix::identity(d, d) }
    }

    pub fn zeros(d: usize) -> Self {
        Self { inner: DMatrix::zeros(d, d) }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `v vᵀ`.
    pub fn outer(v: &[f64]) -> Result<Self> {
        let v = DVector::from_column_slice(v);
        Self::new(&v * v.transpose())
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.inner[(i, j)]).collect())
            .collect()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { inner: &self.inner * t }
    }

    pub fn eigen(&self) -> Result<SymEigen> {
        SymEigen::new(&self.inner)
    }
}

/// Symmetric matrix with a validated eigenvalue floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdMatrix {
    #[serde(flatten)]
    base: SymMatrix,
    #[serde(skip)]
    eigen_floor: f64,
}

impl<'de> Deserialize<'de> for PsdMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let base = SymMatrix::deserialize(de)?;
        PsdMatrix::new(base).map_err(serde::de::Error::custom)
    }
}

impl PsdMatrix {
    /// Validates `smallest eigenvalue ≥ −1e−10·max(1, trace)`.
    pub fn new(base: SymMatrix) -> Result<Self> {
        let eig = base.eigen()?;
        let floor = if base.dim() == 0 { 0.0 } else { eig.min_value() };
        let tol = psd_tolerance(base.trace());
        if floor < -tol || base.trace() < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: floor,
                tolerance: tol,
            });
        }
        Ok(Self { base, eigen_floor: floor })
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            base: SymMatrix::identity(d),
            eigen_floor: if d == 0 { 0.0 } else { 1.0 },
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            base: SymMatrix::zeros(d),
            eigen_floor: 0.0,
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::diagonal(diag)?)
    }

    pub fn outer(v: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::outer(v)?)
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn trace(&self) -> f64 {
        self.base.trace()
    }

    pub fn eigen_floor(&self) -> f64 {
        self.eigen_floor
    }

    pub fn scaled(&self, t: f64) -> Result<Self> {
        if t < 0.0 {
            return Err(Error::InvalidArgument("PSD matrices only scale by t ≥ 0".into()));
        }
        Ok(Self {
            base: self.base.scaled(t),
            eigen_floor: self.eigen_floor * t,
        })
    }
}

pub fn psd_tolerance(trace: f64) -> f64 {
    1e-10 * trace.abs().max(1.0)
}

/// A norm `γ` on the PSD cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NormJson", into = "NormJson")]
pub enum NormSpec {
    /// `γ_p(S) = ‖λ(S)‖_p`, `1 ≤ p ≤ ∞`.
    Schatten { p: f64 },
    /// `γ(S) = tr(S) + M Σ_{i<j} |S_ij|` with `M > 2`.
    NonSpectral { m: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum NormJson {
    Schatten { p: Exponent },
    Nonspectral {
        #[serde(rename = "M")]
        m: f64,
    },
}

/// A real exponent that serializes `∞` as the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    Named(String),
}

impl Exponent {
    pub fn value(&self) -> Result<f64> {
        match self {
            Exponent::Finite(p) => Ok(*p),
            Exponent::Named(s) => parse_exponent(s),
        }
    }

    pub fn from_value(p: f64) -> Self {
        if p.is_infinite() {
            Exponent::Named("inf".into())
        } else {
            Exponent::Finite(p)
        }
    }
}

/// Parses `1`, `2`, `4.5`, `inf`, `infinity`.
pub fn parse_exponent(s: &str) -> Result<f64> {
    let t = s.trim().to_ascii_lowercase();
    if t == "inf" || t == "infinity" || t == "∞" {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| Error::InvalidNorm(format!("cannot parse exponent '{s}'")))
}

impl TryFrom<NormJson> for NormSpec {
    type Error = Error;
    fn try_from(j: NormJson) -> Result<Self> {
        match j {
            NormJson::Schatten { p } => NormSpec::schatten(p.value()?),
            NormJson::Nonspectral { m } => NormSpec::nonspectral(m),
        }
    }
}

impl From<NormSpec> for NormJson {
    fn from(n: NormSpec) -> Self {
        match n {
            NormSpec::Schatten { p } => NormJson::Schatten { p: Exponent::from_value(p) },
            NormSpec::NonSpectral { m } => NormJson::Nonspectral { m },
        }
    }
}

impl NormSpec {
    pub fn schatten(p: f64) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidNorm(format!("Schatten exponent must be ≥ 1, got {p}")));
        }
        Ok(NormSpec::Schatten { p })
    }

    pub fn nonspectral(m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 2.0) {
            return Err(Error::InvalidNorm(format!(
                "non-spectral norm parameter must be a finite M > 2, got {m}"
            )));
        }
        Ok(NormSpec::NonSpectral { m })
    }

    pub fn trace() -> Self {
        NormSpec::Schatten { p: 1.0 }
    }

    pub fn frobenius() -> Self {
        NormSpec::Schatten { p: 2.0 }
    }

    pub fn operator() -> Self {
        NormSpec::Schatten { p: f64::INFINITY }
    }

    pub fn is_monotone(&self) -> bool {
        matches!(self, NormSpec::Schatten { .. })
    }

    /// Schatten exponent, if any.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            NormSpec::Schatten { p } => Some(*p),
            NormSpec::NonSpectral { .. } => None,
        }
    }

    /// `q = p/(p−1)`, with `1 ↦ ∞` and `∞ ↦ 1`.
    pub fn dual_exponent(&self) -> Option<f64> {
        self.exponent().map(dual_exponent)
    }

    pub fn label(&self) -> String {
        match self {
            NormSpec::Schatten { p } if p.is_infinite() => "schatten-inf".into(),
            NormSpec::Schatten { p } => format!("schatten-{p}"),
            NormSpec::NonSpectral { m } => format!("nonspectral-M{m}"),
        }
    }

    pub(crate) fn require_schatten(&self, what: &str) -> Result<f64> {
        self.exponent().ok_or_else(|| {
            Error::UnsupportedNorm(format!(
                "{what} needs a Schatten norm; the non-spectral norm has no PSD representing set"
            ))
        })
    }
}

pub fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

/// The representing set `K_p` of a Schatten norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualBallSpec {
    norm: NormSpec,
    p: f64,
}

impl DualBallSpec {
    pub fn new(norm: NormSpec) -> Result<Self> {
        let p = norm.require_schatten("the dual ball")?;
        Ok(Self { norm, p })
    }

    pub fn norm(&self) -> NormSpec {
        self.norm
    }

    /// `K_1 = {Id}`.
    pub fn is_singleton(&self) -> bool {
        self.p == 1.0
    }

    pub fn dual_exponent(&self) -> f64 {
        dual_exponent(self.p)
    }

    /// Membership test: PSD and `‖Q‖_{S_q} ≤ 1 + tol` (or `Q = Id` for p = 1).
    pub fn contains(&self, q: &SymMatrix, tol: f64) -> Result<bool> {
        let d = q.dim();
        if self.is_singleton() {
            let diff = q.matrix() - DMatrix::<f64>::identity(d, d);
            return Ok(diff.amax() <= tol);
        }
        let eig = q.eigen()?;
        if eig.min_value() < -tol {
            return Ok(false);
        }
        let lam: Vec<f64> = eig.values.iter().map(|l| l.max(0.0)).collect();
        Ok(lp_norm(&lam, self.dual_exponent()) <= 1.0 + tol)
    }

    pub fn project(&self, q: &SymMatrix) -> Result<PsdMatrix> {
        project_dual_ball(q, self.norm)
    }
}

fn clipped_eigenvalues(eig: &SymEigen) -> Vec<f64> {
    eig.values.iter().map(|l| l.max(0.0)).collect()
}

/// Evaluates `γ` on a raw symmetric matrix treated as PSD. Tiny negative
/// eigenvalues from round-off are clipped to zero.
pub(crate) fn gamma_matrix(s: &DMatrix<f64>, norm: NormSpec) -> Result<f64> {
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("norm argument"));
    }
    match norm {
        NormSpec::Schatten { p } => {
            if p == 1.0 {
                return Ok(s.trace().max(0.0));
            }
            let eig = SymEigen::new(s)?;
            Ok(lp_norm(&clipped_eigenvalues(&eig), p))
        }
        NormSpec::NonSpectral { m } => {
            let d = s.nrows();
            let mut off = 0.0;
            for i in 0..d {
                for j in (i + 1)..d {
                    off += s[(i, j)].abs();
                }
            }
            Ok(s.trace() + m * off)
        }
    }
}

/// `γ(S)`: eigenvalue ℓp norm for Schatten kinds, `tr S + M Σ_{i<j}|S_ij|` otherwise.
pub fn gamma_eval(s: &PsdMatrix, norm: NormSpec) -> Result<f64> {
    gamma_matrix(s.matrix(), norm)
}

/// An element `Q* ∈ argmax_{Q ∈ K_p} tr(QS)`.
///
/// * `p = 1`: `Id`.
/// * `1 < p < ∞`: `U diag(λ^{p−1}) Uᵀ / ‖λ‖_p^{p−1}`.
/// * `p = ∞`: the top-eigenspace projector divided by its rank.
///
/// For `S = 0` every feasible element is a maximizer and `Id / d^{1/q}` is returned.
pub fn active_dual_matrix(s: &PsdMatrix, norm: NormSpec) -> Result<PsdMatrix> {
    active_dual_raw(s.matrix(), norm).and_then(PsdMatrix::from_matrix)
}

pub(crate) fn active_dual_raw(s: &DMatrix<f64>, norm: NormSpec) -> Result<DMatrix<f64>> {
    let p = norm.require_schatten("active_dual_matrix")?;
    let d = s.nrows();
    if p == 1.0 {
        return Ok(DMatrix::identity(d, d));
    }
    let eig = SymEigen::new(s)?;
    let lam = clipped_eigenvalues(&eig);
    let top = lam.first().copied().unwrap_or(0.0);
    let scale = s.amax().max(top);
    if top <= 1e-300 || top <= 1e-14 * scale {
        let q = dual_exponent(p);
        let c = if q.is_infinite() { 1.0 } else { (d as f64).powf(-1.0 / q) };
        return Ok(DMatrix::identity(d, d) * c);
    }
    if p.is_infinite() {
        let k = lam.iter().filter(|&&l| l >= top * (1.0 - TIE_TOL)).count();
        let w = 1.0 / k as f64;
        return Ok(eig.map(|l| if l >= top * (1.0 - TIE_TOL) { w } else { 0.0 }));
    }
    let norm_p = lp_norm(&lam, p);
    // λ_i^{p-1} / ‖λ‖_p^{p-1} = (λ_i/‖λ‖_p)^{p-1}, evaluated in the ratio form
    Ok(eig.map(|l| (l.max(0.0) / norm_p).powf(p - 1.0)))
}

/// Euclidean projection of `y ≥ 0` onto `{x ≥ 0 : Σ x ≤ 1}`.
fn project_capped_simplex(y: &[f64]) -> Vec<f64> {
    let pos: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    if pos.iter().sum::<f64>() <= 1.0 {
        return pos;
    }
    let mut sorted = pos.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    pos.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Solves `x + c x^{q−1} = y` for `x ∈ [0, y]` (`c ≥ 0`, `q > 1`).
fn solve_kkt_coordinate(y: f64, c: f64, q: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if c == 0.0 {
        return y;
    }
    let (mut lo, mut hi) = (0.0_f64, y);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + c * mid.powf(q - 1.0) > y {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-16 * y {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Euclidean projection of `y ≥ 0` onto the nonnegative unit ℓq ball.
pub(crate) fn project_lq_ball(y: &[f64], q: f64) -> Vec<f64> {
    let pos: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    if lp_norm(&pos, q) <= 1.0 {
        return pos;
    }
    if q == 1.0 {
        return project_capped_simplex(&pos);
    }
    if q == 2.0 {
        let n = lp_norm(&pos, 2.0);
        return pos.iter().map(|v| v / n).collect();
    }
    if q.is_infinite() {
        return pos.iter().map(|v| v.min(1.0)).collect();
    }
    // KKT: x_i + ν q x_i^{q-1} = y_i with ν chosen so that ‖x‖_q = 1.
    let residual = |nu: f64| -> (Vec<f64>, f64) {
        let x: Vec<f64> = pos.iter().map(|&v| solve_kkt_coordinate(v, nu * q, q)).collect();
        let r = lp_norm(&x, q) - 1.0;
        (x, r)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while residual(hi).1 > 0.0 && hi < 1e300 {
        hi *= 2.0;
    }
    // r(ν) is decreasing; keep `hi` on the feasible side.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid).1;
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if r.abs() <= 1e-12 || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    residual(hi).0
}

/// Frobenius projection onto `K_p` (the constant map onto `Id` for `p = 1`).
pub fn project_dual_ball(q: &SymMatrix, norm: NormSpec) -> Result<PsdMatrix> {
    let p = norm.require_schatten("project_dual_ball")?;
    let d = q.dim();
    if p == 1.0 {
        return Ok(PsdMatrix::identity(d));
    }
    let eig = q.eigen()?;
    let lam = clipped_eigenvalues(&eig);
    let proj = project_lq_ball(&lam, dual_exponent(p));
    PsdMatrix::from_matrix(eig.rebuild(&proj))
}

/// Constants `(c, C)` with `c tr(S) ≤ γ_p(S) ≤ C tr(S)` on `d×d` PSD matrices.
pub fn comparison_constants(p: f64, d: usize) -> Result<(f64, f64)> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidNorm(format!("Schatten exponent must be ≥ 1, got {p}")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be ≥ 1".into()));
    }
    let inv = if p.is_infinite() { 0.0 } else { 1.0 / p };
    Ok(((d as f64).powf(inv - 1.0), 1.0))
}

/// `d_γ(x, y) = √γ((y−x)(y−x)ᵀ)`.
pub fn pointwise_cost(x: &[f64], y: &[f64], norm: NormSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "points of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    let delta: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let s = SymMatrix::outer(&delta)?;
    Ok(gamma_matrix(s.matrix(), norm)?.max(0.0).sqrt())
}
