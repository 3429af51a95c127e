//! Restricted master problem of the cutting-plane outer loop.
//!
//! Given displacement covariances `Σ_1..Σ_k` of vertex couplings, solve
//!
//! ```text
//! min_{w ∈ simplex} γ_p(Σ_i w_i Σ_i)  =  max_{Q ∈ K_p} min_i tr(Q Σ_i)
//! ```
//!
//! with a primal log-barrier Newton method. For `p = ∞` the epigraph
//! `τ I ⪰ S(w)` carries a log-det barrier and the dual matrix is read off the
//! central path; for finite `p` the smooth surrogate `tr(S(w)^p)` is
//! minimized and the dual is the active matrix of the optimal mixture.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymEigen;
use crate::psd_norms::{active_dual_raw, gamma_matrix, NormSpec};

#[derive(Debug, Clone)]
pub(crate) struct MasterSolution {
    pub weights: Vec<f64>,
    /// `γ_p(Σ w_i Σ_i)`, an upper bound on the restricted optimum.
    pub upper: f64,
    /// A member of `K_p`, approximately optimal for the dual.
    pub dual: DMatrix<f64>,
}

const GAP_TARGET: f64 = 1e-13;
const T_GROWTH: f64 = 8.0;

pub(crate) fn solve_master(vertices: &[DMatrix<f64>], p: f64) -> Result<MasterSolution> {
    let k = vertices.len();
    if k == 0 {
        return Err(Error::Solver("empty master problem".into()));
    }
    let norm = NormSpec::schatten(p)?;
    let scale = vertices
        .iter()
        .map(|v| v.trace())
        .fold(0.0, f64::max);
    if k == 1 || scale <= 0.0 {
        let mut weights = vec![0.0; k];
        weights[0] = 1.0;
        return finish(vertices, weights, norm, None);
    }
    let scaled: Vec<DMatrix<f64>> = vertices.iter().map(|v| v / scale).collect();
    if p.is_infinite() {
        let (weights, m_over_t) = solve_max_eigen(&scaled)?;
        finish(vertices, weights, norm, Some(m_over_t))
    } else {
        let weights = solve_trace_power(&scaled, p)?;
        finish(vertices, weights, norm, None)
    }
}

fn finish(
    vertices: &[DMatrix<f64>],
    weights: Vec<f64>,
    norm: NormSpec,
    dual: Option<DMatrix<f64>>,
) -> Result<MasterSolution> {
    let mut weights: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Solver("master weights collapsed".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    let s = mix(vertices, &weights);
    let upper = gamma_matrix(&s, norm)?;
    let dual = match dual {
        Some(q) => {
            // central-path matrix has trace ≈ 1; renormalize onto the face tr Q = 1
            let eig = SymEigen::new(&q)?;
            let clipped = eig.map(|l| l.max(0.0));
            let tr = clipped.trace();
            let mut best = if tr > 0.0 { clipped / tr } else { active_dual_raw(&s, norm)? };
            let mut best_val = dual_value(vertices, &best);
            for rel in [1e-9, 1e-7, 1e-5, 1e-3] {
                if let Some(cand) = polish_top_face(vertices, &weights, &s, rel) {
                    let v = dual_value(vertices, &cand);
                    if v > best_val {
                        best_val = v;
                        best = cand;
                    }
                }
            }
            best
        }
        None => active_dual_raw(&s, norm)?,
    };
    Ok(MasterSolution { weights, upper, dual })
}

fn dual_value(vertices: &[DMatrix<f64>], q: &DMatrix<f64>) -> f64 {
    vertices
        .iter()
        .map(|v| trace_product(q, v))
        .fold(f64::INFINITY, f64::min)
}

/// Dual matrix `U R Uᵀ` on the top eigenspace of `s` equalizing the cuts of
/// the vertices carrying weight. `rel` sets the eigenvalue cluster width.
fn polish_top_face(
    vertices: &[DMatrix<f64>],
    weights: &[f64],
    s: &DMatrix<f64>,
    rel: f64,
) -> Option<DMatrix<f64>> {
    let eig = SymEigen::new(s).ok()?;
    let top = eig.max_value();
    if top <= 0.0 {
        return None;
    }
    let r = eig.values.iter().take_while(|&&l| l >= top * (1.0 - rel)).count();
    let u = eig.vectors.columns(0, r).into_owned();
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let active: Vec<usize> = (0..vertices.len()).filter(|&i| weights[i] > 1e-6 * wmax).collect();
    // unknowns: upper triangle of R, then the common cut value c
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect();
    let nu = pairs.len() + 1;
    let mut a = DMatrix::zeros(active.len() + 1, nu);
    let mut rhs = DVector::zeros(active.len() + 1);
    for (row, &i) in active.iter().enumerate() {
        let red = u.transpose() * &vertices[i] * &u;
        for (col, &(x, y)) in pairs.iter().enumerate() {
            a[(row, col)] = if x == y { red[(x, x)] } else { 2.0 * red[(x, y)] };
        }
        a[(row, nu - 1)] = -1.0;
    }
    let last = active.len();
    for (col, &(x, y)) in pairs.iter().enumerate() {
        if x == y {
            a[(last, col)] = 1.0;
        }
    }
    rhs[last] = 1.0;
    let sol = a.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let mut rm = DMatrix::zeros(r, r);
    for (col, &(x, y)) in pairs.iter().enumerate() {
        rm[(x, y)] = sol[col];
        rm[(y, x)] = sol[col];
    }
    let re = SymEigen::new(&rm).ok()?;
    let clipped = re.map(|l| l.max(0.0));
    let tr = clipped.trace();
    if tr <= 0.0 {
        return None;
    }
    Some(&u * (clipped / tr) * u.transpose())
}

fn mix(vertices: &[DMatrix<f64>], w: &[f64]) -> DMatrix<f64> {
    let d = vertices[0].nrows();
    let mut s = DMatrix::zeros(d, d);
    for (v, &wi) in vertices.iter().zip(w) {
        s += v * wi;
    }
    (&s + s.transpose()) * 0.5
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Equality-constrained damped Newton with a barrier path.
/// `eval(z, t)` returns `None` outside the barrier domain; `eq` is the
/// coefficient vector of the constraint `eqᵀ z = 1`.
fn barrier_path(
    mut z: DVector<f64>,
    eq: &DVector<f64>,
    barrier_count: f64,
    eval: impl Fn(&DVector<f64>, f64) -> Option<Eval>,
) -> Result<(DVector<f64>, f64)> {
    let n = z.len();
    let mut t = 1.0;
    for stage in 0..200 {
        for _newton in 0..200 {
            let Some(e) = eval(&z, t) else {
                return Err(Error::Solver("barrier iterate left the domain".into()));
            };
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&e.hess);
            for i in 0..n {
                kkt[(i, n)] = eq[i];
                kkt[(n, i)] = eq[i];
            }
            let mut rhs = DVector::zeros(n + 1);
            for i in 0..n {
                rhs[i] = -e.grad[i];
            }
            let sol = kkt.lu().solve(&rhs).filter(|x| x.iter().all(|v| v.is_finite()));
            let Some(sol) = sol else {
                if stage == 0 {
                    return Err(Error::Solver("singular Newton system in master problem".into()));
                }
                return Ok((z, t));
            };
            let dz = sol.rows(0, n).into_owned();
            let slope = e.grad.dot(&dz);
            if -slope / 2.0 <= 1e-14 {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-20 {
                let cand = &z + &dz * step;
                if let Some(ec) = eval(&cand, t) {
                    if ec.value <= e.value + 0.25 * step * slope {
                        z = cand;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if barrier_count / t < GAP_TARGET {
            break;
        }
        t *= T_GROWTH;
    }
    Ok((z, t))
}

/// `min τ` s.t. `τ I ⪰ Σ w_i V_i`, `w ∈ simplex`. Returns `w` and `M/t`.
fn solve_max_eigen(vertices: &[DMatrix<f64>]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = vertices.len();
    let d = vertices[0].nrows();
    let w0 = vec![1.0 / k as f64; k];
    let s0 = mix(vertices, &w0);
    let tau0 = SymEigen::new(&s0)?.max_value() + 1.0;
    let mut z0 = DVector::from_element(k + 1, 1.0 / k as f64);
    z0[k] = tau0;
    let mut eq = DVector::from_element(k + 1, 1.0);
    eq[k] = 0.0;

    let inner = |z: &DVector<f64>| -> Option<(DMatrix<f64>, f64)> {
        if z.rows(0, k).iter().any(|&w| w <= 0.0) {
            return None;
        }
        let w: Vec<f64> = z.rows(0, k).iter().copied().collect();
        let s = mix(vertices, &w);
        let eig = SymEigen::new(&s).ok()?;
        let tau = z[k];
        if eig.values.iter().any(|&l| tau - l <= 0.0) {
            return None;
        }
        let m = eig.map(|l| 1.0 / (tau - l));
        let logdet: f64 = eig.values.iter().map(|&l| (tau - l).ln()).sum();
        Some((m, logdet))
    };

    let eval = |z: &DVector<f64>, t: f64| -> Option<Eval> {
        let (m, logdet) = inner(z)?;
        let w = z.rows(0, k);
        let log_w: f64 = w.iter().map(|x| x.ln()).sum();
        let value = t * z[k] - logdet - log_w;
        let mv: Vec<DMatrix<f64>> = vertices.iter().map(|v| &m * v).collect();
        let mut grad = DVector::zeros(k + 1);
        let mut hess = DMatrix::zeros(k + 1, k + 1);
        for i in 0..k {
            grad[i] = mv[i].trace() - 1.0 / w[i];
            for j in 0..=i {
                let h = trace_product(&mv[i], &mv[j]);
                hess[(i, j)] = h;
                hess[(j, i)] = h;
            }
            hess[(i, i)] += 1.0 / (w[i] * w[i]);
            let cross = -trace_product(&mv[i], &m);
            hess[(i, k)] = cross;
            hess[(k, i)] = cross;
        }
        grad[k] = t - m.trace();
        hess[(k, k)] = trace_product(&m, &m);
        Some(Eval { value, grad, hess })
    };

    let (z, t_final) = barrier_path(z0, &eq, (k + d) as f64, eval)?;
    let (m, _) = inner(&z).ok_or_else(|| Error::Solver("master iterate infeasible".into()))?;
    let w: Vec<f64> = z.rows(0, k).iter().copied().collect();
    Ok((w, m / t_final))
}

/// `min tr(S(w)^p)` over the simplex for `1 < p < ∞`.
fn solve_trace_power(vertices: &[DMatrix<f64>], p: f64) -> Result<Vec<f64>> {
    let k = vertices.len();
    let z = DVector::from_element(k, 1.0 / k as f64);
    let eq = DVector::from_element(k, 1.0);
    let eval = |z: &DVector<f64>, t: f64| -> Option<Eval> {
        if z.iter().any(|&w| w <= 0.0) {
            return None;
        }
        let w: Vec<f64> = z.iter().copied().collect();
        let s = mix(vertices, &w);
        let eig = SymEigen::new(&s).ok()?;
        let lam: Vec<f64> = eig.values.iter().map(|l| l.max(0.0)).collect();
        let top = lam[0].max(1e-300);
        let f: f64 = lam.iter().map(|l| l.powf(p)).sum();
        let d = lam.len();
        // first divided differences of x ↦ x^{p-1}
        let floor = 1e-12 * top;
        let mut dd = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let (x, y) = (lam[a], lam[b]);
                dd[(a, b)] = if (x - y).abs() > 1e-9 * top {
                    (x.powf(p - 1.0) - y.powf(p - 1.0)) / (x - y)
                } else {
                    (p - 1.0) * (0.5 * (x + y)).max(floor).powf(p - 2.0)
                };
            }
        }
        let u = &eig.vectors;
        let rotated: Vec<DMatrix<f64>> = vertices.iter().map(|v| u.transpose() * v * u).collect();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..k {
            let gi: f64 = (0..d).map(|a| lam[a].powf(p - 1.0) * rotated[i][(a, a)]).sum();
            grad[i] = t * p * gi - 1.0 / w[i];
            for j in 0..=i {
                let mut h = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        h += dd[(a, b)] * rotated[i][(a, b)] * rotated[j][(a, b)];
                    }
                }
                hess[(i, j)] = t * p * h;
                hess[(j, i)] = t * p * h;
            }
            hess[(i, i)] += 1.0 / (w[i] * w[i]);
        }
        let value = t * f - w.iter().map(|x| x.ln()).sum::<f64>();
        Some(Eval { value, grad, hess })
    };
    let (z, _) = barrier_path(z, &eq, k as f64, eval)?;
    Ok(z.iter().copied().collect())
}

fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross_vertices() -> Vec<DMatrix<f64>> {
        vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]),
        ]
    }

    #[test]
    fn cross_master_mixes_evenly() {
        for (p, value) in [(f64::INFINITY, 1.0), (2.0, 2f64.sqrt()), (4.0, 2f64.powf(0.25))] {
            let sol = solve_master(&cross_vertices(), p).unwrap();
            assert!((sol.weights[0] - 0.5).abs() < 1e-6, "{p}: {:?}", sol.weights);
            assert!((sol.upper - value).abs() < 1e-9, "{p}: {}", sol.upper);
            let lower = cross_vertices()
                .iter()
                .map(|v| (&sol.dual * v).trace())
                .fold(f64::INFINITY, f64::min);
            assert!((lower - value).abs() < 1e-6, "{p}: lower {lower}");
        }
    }

    #[test]
    fn dominated_vertex_gets_no_weight() {
        let v = vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 3.0]),
        ];
        for p in [2.0, f64::INFINITY] {
            let sol = solve_master(&v, p).unwrap();
            assert!(sol.weights[1] < 1e-8, "{:?}", sol.weights);
        }
    }
}
