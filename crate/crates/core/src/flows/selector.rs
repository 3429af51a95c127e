use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{lp_norm, Svd};
use crate::psd_norms::{gamma_matrix, NormSpec};

/// Singular values below `RANK_TOL · σ_max` are treated as zero by the `p = ∞` selector.
pub const RANK_TOL: f64 = 1e-10;

fn check_finite(g: &DMatrix<f64>) -> Result<()> {
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("selector input"));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    NormSpec::schatten(p).map(|_| ())
}

/// `Ξ_p(G) = −‖G‖_{S_q}^{2−q} U diag(σ^{q−1}) Wᵀ` with `q = 2p/(2p−1)`.
///
/// `Ξ_1(G) = −G` and `Ξ_∞(G) = −‖G‖_{S_1} U Wᵀ`.
pub fn schatten_selector(g: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    check_finite(g)?;
    check_p(p)?;
    if p == 1.0 {
        return Ok(-g);
    }
    let svd = Svd::new(g)?;
    let smax = svd.sigma.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(DMatrix::zeros(g.nrows(), g.ncols()));
    }
    if p.is_infinite() {
        let floor = RANK_TOL * smax;
        let s1: f64 = svd.sigma.iter().filter(|&&s| s > floor).sum();
        return Ok(svd.rebuild(|s| s > floor, |_| -s1));
    }
    let q = 2.0 * p / (2.0 * p - 1.0);
    let norm_q = lp_norm(svd.sigma.as_slice(), q);
    // ‖G‖^{2−q} σ^{q−1} = ‖G‖ (σ/‖G‖)^{q−1}
    Ok(svd.rebuild(|s| s > 0.0, |s| -norm_q * (s / norm_q).powf(q - 1.0)))
}

/// `−tr((GᵀG)^{1/2}) · G (GᵀG)^{†/2}`.
///
/// `(GᵀG)^{1/2} = W diag(σ) Wᵀ` is assembled from the right singular pairs of
/// `G`; forming `GᵀG` explicitly would square the condition number and push
/// round-off above the rank threshold.
pub fn muon_rhs(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_finite(g)?;
    let svd = Svd::new(g)?;
    let top = svd.sigma.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(DMatrix::zeros(g.nrows(), g.ncols()));
    }
    let floor = RANK_TOL * top;
    let d = g.ncols();
    let mut trace_root = 0.0;
    let mut pinv_root = DMatrix::zeros(d, d);
    for k in 0..svd.sigma.len() {
        let s = svd.sigma[k];
        if s <= floor {
            continue;
        }
        trace_root += s;
        let w = svd.v_t.row(k).transpose();
        pinv_root += &w * w.transpose() / s;
    }
    Ok(g * pinv_root * -trace_root)
}

/// Velocity field of the duality map on the empirical measure of `n` particles:
/// the rows of `Ξ_p(G)` where `G` stacks the values `g(x_i)`.
pub fn duality_map(points: &DMatrix<f64>, g_values: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    if points.shape() != g_values.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} particles with {}x{} field values",
            points.nrows(),
            points.ncols(),
            g_values.nrows(),
            g_values.ncols()
        )));
    }
    schatten_selector(g_values, p)
}

/// `⟨g, v⟩_μ = (1/n) Σ g(x_i)·v(x_i)` on the uniform empirical measure.
pub fn empirical_pairing(g: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    g.dot(v) / g.nrows().max(1) as f64
}

/// `𝒩_μ(v)² = γ_p((1/n) VᵀV)`.
pub fn tangent_norm_sq(v: &DMatrix<f64>, p: f64) -> Result<f64> {
    let n = v.nrows().max(1) as f64;
    let gram = v.transpose() * v / n;
    gamma_matrix(&((&gram + gram.transpose()) * 0.5), NormSpec::schatten(p)?)
}

/// `(1/n) ‖V‖_{S_{2p}}²`, the same quantity through singular values.
pub fn tangent_norm_sq_svd(v: &DMatrix<f64>, p: f64) -> Result<f64> {
    check_p(p)?;
    let n = v.nrows().max(1) as f64;
    let s = Svd::new(v)?;
    Ok(lp_norm(s.sigma.as_slice(), 2.0 * p).powi(2) / n)
}

/// Schatten-1, -2 and -∞ norms of a rectangular matrix.
pub fn schatten_triplet(g: &DMatrix<f64>) -> Result<[f64; 3]> {
    let s = Svd::new(g)?;
    let sig = s.sigma.as_slice();
    Ok([lp_norm(sig, 1.0), lp_norm(sig, 2.0), lp_norm(sig, f64::INFINITY)])
}
