use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};

/// Smoothing used by the experiments.
pub const DEFAULT_EPS: f64 = 1e-2;

fn smoothed_dist(a: &[f64], b: &[f64], eps2: f64) -> f64 {
    let mut s = eps2;
    for (x, y) in a.iter().zip(b) {
        s += (x - y) * (x - y);
    }
    s.sqrt()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check(x: &DMatrix<f64>, y: &DMatrix<f64>, eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!("clouds in R^{} and R^{}", x.ncols(), y.ncols())));
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::InvalidArgument("empty particle cloud".into()));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("particle cloud"));
    }
    Ok(())
}

/// MMD² for the kernel `k(x, y) = −√(‖x−y‖² + ε²)`.
pub fn mmd_value(x: &DMatrix<f64>, y: &DMatrix<f64>, eps: f64) -> Result<f64> {
    mmd_value_with(x, y, eps, Execution::best_available())
}

pub fn mmd_value_with(x: &DMatrix<f64>, y: &DMatrix<f64>, eps: f64, exec: Execution) -> Result<f64> {
    check(x, y, eps)?;
    let (xr, yr) = (rows(x), rows(y));
    let eps2 = eps * eps;
    let (n, m) = (xr.len() as f64, yr.len() as f64);
    let pair_sum = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        map_indexed(a.len(), exec, |i| b.iter().map(|bj| smoothed_dist(&a[i], bj, eps2)).sum::<f64>())
            .into_iter()
            .sum()
    };
    let xx = pair_sum(&xr, &xr);
    let yy = pair_sum(&yr, &yr);
    let xy = pair_sum(&xr, &yr);
    // kernel is the negated smoothed distance
    Ok(-xx / (n * n) - yy / (m * m) + 2.0 * xy / (n * m))
}

/// `∂MMD²/∂x_i` for every particle of `x`, as an `n×d` matrix.
pub fn mmd_gradient(x: &DMatrix<f64>, y: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    mmd_gradient_with(x, y, eps, Execution::best_available())
}

pub fn mmd_gradient_with(x: &DMatrix<f64>, y: &DMatrix<f64>, eps: f64, exec: Execution) -> Result<DMatrix<f64>> {
    check(x, y, eps)?;
    let (xr, yr) = (rows(x), rows(y));
    let eps2 = eps * eps;
    let d = x.ncols();
    let (n, m) = (xr.len() as f64, yr.len() as f64);
    let grads = map_indexed(xr.len(), exec, |i| {
        let xi = &xr[i];
        let mut g = vec![0.0; d];
        for xk in &xr {
            let r = smoothed_dist(xi, xk, eps2);
            for c in 0..d {
                g[c] -= 2.0 / (n * n) * (xi[c] - xk[c]) / r;
            }
        }
        for yj in &yr {
            let r = smoothed_dist(xi, yj, eps2);
            for c in 0..d {
                g[c] += 2.0 / (n * m) * (xi[c] - yj[c]) / r;
            }
        }
        g
    });
    Ok(DMatrix::from_fn(xr.len(), d, |i, c| grads[i][c]))
}
