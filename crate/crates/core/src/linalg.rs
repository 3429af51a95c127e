//! Dense linear-algebra helpers shared by the norm, Gaussian and flow modules.
//!
//! Eigenpairs are always returned in descending eigenvalue order with the
//! sign of every eigenvector fixed so that its first non-negligible component
//! is positive. Downstream tie-breaking relies on that ordering.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SIGN_TOL: f64 = 1e-12;

/// Descending eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "eigendecomposition of a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("eigendecomposition input"));
        }
        let d = m.nrows();
        if d == 0 {
            return Ok(Self {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            });
        }
        let sym = (m + m.transpose()) * 0.5;
        let eig = sym
            .clone()
            .try_symmetric_eigen(f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Eigen("symmetric QR iteration did not converge".into()))?;
        if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::Eigen("non-finite eigenvalue".into()));
        }

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let mut values = DVector::zeros(d);
        let mut vectors = DMatrix::zeros(d, d);
        for (k, &src) in order.iter().enumerate() {
            values[k] = eig.eigenvalues[src];
            let mut col = eig.eigenvectors.column(src).into_owned();
            let scale = col.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if let Some(first) = col.iter().find(|x| x.abs() > SIGN_TOL * scale.max(1e-300)) {
                if *first < 0.0 {
                    col.neg_mut();
                }
            }
            vectors.set_column(k, &col);
        }
        Ok(Self { values, vectors })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `U diag(values) Uᵀ` for replacement eigenvalues in the stored order.
    pub fn rebuild(&self, values: &[f64]) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, &s) in values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(s);
        }
        symmetrize(&(&scaled * self.vectors.transpose()))
    }

    /// Rebuilds `U diag(f(λ)) Uᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut scaled = self.vectors.clone();
        for k in 0..d {
            let s = f(self.values[k]);
            scaled.column_mut(k).scale_mut(s);
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(&out)
    }
}

/// Thin singular value decomposition with descending singular values.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("svd input"));
        }
        let k = m.nrows().min(m.ncols());
        if k == 0 {
            return Ok(Self {
                u: DMatrix::zeros(m.nrows(), 0),
                sigma: DVector::zeros(0),
                v_t: DMatrix::zeros(0, m.ncols()),
            });
        }
        let svd = m
            .clone()
            .try_svd(true, true, 5.0 * f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen("svd did not converge".into()))?;
        let u = svd.u.ok_or_else(|| Error::Eigen("svd returned no U".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Eigen("svd returned no V".into()))?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let mut su = DMatrix::zeros(m.nrows(), k);
        let mut sv = DMatrix::zeros(k, m.ncols());
        let mut sigma = DVector::zeros(k);
        for (dst, &src) in order.iter().enumerate() {
            sigma[dst] = svd.singular_values[src];
            su.set_column(dst, &u.column(src));
            sv.set_row(dst, &v_t.row(src));
        }
        Ok(Self { u: su, sigma, v_t: sv })
    }

    /// `U diag(f(σ)) Wᵀ` restricted to the singular triples selected by `keep`.
    pub fn rebuild(&self, keep: impl Fn(f64) -> bool, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.u.nrows(), self.v_t.ncols());
        for k in 0..self.sigma.len() {
            let s = self.sigma[k];
            if !keep(s) {
                continue;
            }
            let w = f(s);
            out += (self.u.column(k) * self.v_t.row(k)) * w;
        }
        out
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// ℓp norm of a vector, `p = ∞` allowed.
pub fn lp_norm(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    if p.is_infinite() {
        return values.iter().map(|x| x.abs()).fold(0.0, f64::max);
    }
    let scale = values.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return values.iter().map(|x| x.abs()).sum();
    }
    let s: f64 = values.iter().map(|x| (x.abs() / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// Schatten-p norm of a general rectangular matrix.
pub fn schatten_norm(m: &DMatrix<f64>, p: f64) -> Result<f64> {
    let svd = Svd::new(m)?;
    Ok(lp_norm(svd.sigma.as_slice(), p))
}

/// Symmetric square root of a PSD matrix (negative eigenvalues are clipped).
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SymEigen::new(m)?.map(|l| l.max(0.0).sqrt()))
}

/// Inverse of a symmetric positive definite matrix through its eigenpairs.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m)?;
    let top = eig.max_value().abs().max(1e-300);
    if eig.min_value() <= 1e-14 * top {
        return Err(Error::Singular(format!(
            "{what}: smallest eigenvalue {:e}",
            eig.min_value()
        )));
    }
    Ok(eig.map(|l| 1.0 / l))
}

/// Inverse square root of a symmetric positive definite matrix.
pub fn spd_inv_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m)?;
    let top = eig.max_value().abs().max(1e-300);
    if eig.min_value() <= 1e-14 * top {
        return Err(Error::Singular(format!(
            "{what}: smallest eigenvalue {:e}",
            eig.min_value()
        )));
    }
    Ok(eig.map(|l| 1.0 / l.sqrt()))
}

pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let eig = SymEigen::new(m)?;
    if eig.min_value() <= 0.0 {
        return Err(Error::Singular(format!(
            "log-determinant of a matrix with eigenvalue {:e}",
            eig.min_value()
        )));
    }
    Ok(eig.values.iter().map(|l| l.ln()).sum())
}
