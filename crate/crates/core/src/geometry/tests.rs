use super::suites::{run_suite, Suite, SuiteConfig};
use super::*;
use crate::psd_norms::PsdMatrix;
use approx::assert_relative_eq;

fn inf() -> NormSpec {
    NormSpec::operator()
}

fn cross() -> (Arc<DiscreteMeasure>, Arc<DiscreteMeasure>) {
    let a = DiscreteMeasure::uniform_from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    let b = DiscreteMeasure::uniform_from_rows(&[vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
    (Arc::new(a), Arc::new(b))
}

fn solve(a: &Arc<DiscreteMeasure>, b: &Arc<DiscreteMeasure>, norm: NormSpec) -> StaticSolution {
    spectral_wasserstein(a, b, norm, &SolverOptions::default()).unwrap()
}

#[test]
fn interpolation_endpoints_and_midpoint() {
    let a = Arc::new(DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap());
    let b = Arc::new(DiscreteMeasure::dirac(&[1.0, 0.0]).unwrap());
    let sol = solve(&a, &b, inf());
    assert_eq!(geodesic_interpolate(&sol, 0.0).unwrap(), *a);
    assert_eq!(geodesic_interpolate(&sol, 1.0).unwrap(), *b);
    let mid = geodesic_interpolate(&sol, 0.5).unwrap();
    assert_eq!(mid.point(0), vec![0.5, 0.0]);
    assert!(geodesic_interpolate(&sol, 1.5).is_err());
}

#[test]
fn split_cross_coupling_midpoint_has_four_atoms() {
    let (a, b) = cross();
    let plan = DMatrix::from_element(2, 2, 0.25);
    let c = Coupling::new(a, b, plan).unwrap();
    let mid = interpolate_coupling(&c, 0.5).unwrap();
    assert_eq!(mid.len(), 4);
    for i in 0..4 {
        assert_relative_eq!(mid.weights()[i], 0.25);
        for v in mid.point(i) {
            assert_relative_eq!(v.abs(), 0.5);
        }
    }
}

#[test]
fn coincident_atoms_merge() {
    let a = Arc::new(DiscreteMeasure::uniform_from_rows(&[vec![0.0], vec![2.0]]).unwrap());
    let b = Arc::new(DiscreteMeasure::uniform_from_rows(&[vec![2.0], vec![0.0]]).unwrap());
    let plan = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
    let c = Coupling::new(a, b, plan).unwrap();
    let mid = interpolate_coupling(&c, 0.5).unwrap();
    assert_eq!(mid.len(), 1);
    assert_relative_eq!(mid.weights()[0], 1.0);
    assert_relative_eq!(mid.point(0)[0], 1.0);
}

#[test]
fn cross_instance_half_speed() {
    let (a, b) = cross();
    let rep = constant_speed_check(&a, &b, inf(), &[(0.0, 1.0), (0.0, 0.5)], &SolverOptions::default()).unwrap();
    assert_relative_eq!(rep.distance, 1.0, epsilon = 1e-6);
    assert_relative_eq!(rep.entries[1].measured, 0.5, epsilon = 1e-3);
    assert!(rep.max_relative_deviation < 1e-3);
}

#[test]
fn action_matches_coupling_cost() {
    let (a, b) = cross();
    for norm in [NormSpec::trace(), NormSpec::frobenius(), inf()] {
        let sol = solve(&a, &b, norm);
        let rep = action_identity_check(&sol, 10).unwrap();
        assert!((rep.action - rep.coupling_cost).abs() <= 1e-10);
        assert!((rep.action - rep.value_sq).abs() <= sol.gap.max(0.0) + 1e-10);
        assert!(rep.max_covariance_deviation < 1e-12);
    }
    let sol = solve(&a, &b, NormSpec::trace());
    assert_relative_eq!(action_identity_check(&sol, 4).unwrap().action, 2.0, epsilon = 1e-9);
}

#[test]
fn jitter_raises_action() {
    let (a, b) = cross();
    let sol = solve(&a, &b, NormSpec::frobenius());
    let k = support_size(&sol.coupling);
    let zero = vec![DVector::zeros(2); k];
    assert_relative_eq!(jittered_action(&sol, &zero).unwrap(), sol.upper_bound, epsilon = 1e-12);
    let bump: Vec<DVector<f64>> = (0..k).map(|i| DVector::from_vec(vec![0.1 * (i as f64 + 1.0), -0.05])).collect();
    assert!(jittered_action(&sol, &bump).unwrap() > sol.value_sq);
    assert!(jittered_action(&sol, &zero[..k - 1]).is_err());
}

#[test]
fn dirac_convexity_reduces_to_pointwise() {
    let a = Arc::new(DiscreteMeasure::dirac(&[0.5, -1.0]).unwrap());
    let b = Arc::new(DiscreteMeasure::dirac(&[1.5, 1.0]).unwrap());
    let sol = solve(&a, &b, NormSpec::frobenius());
    let h = Potential::HalfSquaredNorm;
    let rep = linear_convexity_probe(&h, &sol, 1.0, &[0.3]).unwrap();
    let z = [0.5, -1.0];
    let xi = [1.0, 2.0];
    let t: f64 = 0.3;
    let zt: Vec<f64> = (0..2).map(|k| z[k] + t * xi[k]).collect();
    let gamma_xi = 5.0;
    let bound = (1.0 - t) * h.eval(&z) + t * h.eval(&[1.5, 1.0]) - 0.5 * t * (1.0 - t) * gamma_xi;
    assert_relative_eq!(rep.max_violation, h.eval(&zt) - bound, epsilon = 1e-9);
    assert!(rep.max_violation <= rep.slack);
}

#[test]
fn concave_potential_violates() {
    let a = Arc::new(DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap());
    let b = Arc::new(DiscreteMeasure::dirac(&[2.0, 0.0]).unwrap());
    let sol = solve(&a, &b, inf());
    let h = Potential::Quadratic(-DMatrix::<f64>::identity(2, 2));
    assert_relative_eq!(h.kappa().unwrap(), -1.0);
    let rep = linear_convexity_probe(&h, &sol, 0.0, &[0.5]).unwrap();
    assert_relative_eq!(rep.max_violation, 0.5, epsilon = 1e-9);
}

#[test]
fn entropy_probe_cases() {
    let mu = GaussianMeasure::isotropic(2, 2.0).unwrap();
    let nu = GaussianMeasure::isotropic(2, 1.0).unwrap();
    let same = gaussian_entropy_probe(&mu, &mu, &nu, NormSpec::frobenius(), &[0.25, 0.5]).unwrap();
    assert!(same.max_violation.abs() < 1e-9);
    let mu1 = GaussianMeasure::isotropic(2, 0.5).unwrap();
    let iso = gaussian_entropy_probe(&mu, &mu1, &nu, NormSpec::trace(), &[0.25, 0.5, 0.75]).unwrap();
    assert!(iso.holds);
    let d0 = GaussianMeasure::centered(PsdMatrix::diagonal(&[1.0, 3.0]).unwrap());
    let d1 = GaussianMeasure::centered(PsdMatrix::diagonal(&[2.0, 0.5]).unwrap());
    let nu2 = GaussianMeasure::centered(PsdMatrix::diagonal(&[1.0, 2.0]).unwrap());
    let rep = gaussian_entropy_probe(&d0, &d1, &nu2, inf(), &[0.5]).unwrap();
    assert_relative_eq!(rep.kappa, 0.5, epsilon = 1e-12);
    assert!(rep.max_violation.is_finite());
}

#[test]
fn spherical_projection_examples() {
    let s = spherical_projection(&DiscreteMeasure::dirac(&[2.0, 0.0]).unwrap());
    assert_eq!(s.masses, vec![4.0]);
    assert_eq!(s.directions.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
    let pm = DiscreteMeasure::uniform_from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
    let s = spherical_projection(&pm);
    assert_eq!(s.masses, vec![0.5, 0.5]);
    assert_relative_eq!(s.total_mass(), pm.second_moment_matrix()[(0, 0)]);
    let origin = DiscreteMeasure::uniform_from_rows(&[vec![0.0, 0.0], vec![0.0, 3.0]]).unwrap();
    assert_eq!(spherical_projection(&origin).masses, vec![4.5]);
}

#[test]
fn splitting_preserves_second_moment() {
    let mu = DiscreteMeasure::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.3]], vec![0.3, 0.7]).unwrap();
    let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    for s in [0.0, 0.1, 0.5, 0.9, 1.0] {
        let split = split_atom(&mu, 0, s).unwrap();
        assert_eq!(split.len(), 3);
        assert!((second_moment_objective(&mu, &t) - second_moment_objective(&split, &t)).abs() < 1e-12);
    }
    assert!(split_atom(&mu, 5, 0.5).is_err());
}

#[test]
fn nonspectral_triple_breaks_triangle() {
    let (direct, via) = nonspectral_triangle(3.0).unwrap();
    assert_relative_eq!(direct, 5.0_f64.sqrt(), epsilon = 1e-12);
    assert_relative_eq!(via, 2.0, epsilon = 1e-12);
    assert!(direct > via);
}

#[test]
fn suites_pass_on_small_configs() {
    for p in [2.0, f64::INFINITY] {
        let cfg = SuiteConfig { instances: 2, triples: 3, splits: 5, ..SuiteConfig::new(p, 11) };
        let rep = run_suite(Suite::All, &cfg).unwrap();
        for c in &rep.checks {
            assert!(c.passed(), "{} failed: {} > {} ({})", c.name, c.measured, c.threshold, c.detail);
        }
        let json = serde_json::to_string(&rep).unwrap();
        let back: suites::SuiteReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.checks.len(), rep.checks.len());
        assert_eq!(back.p, p);
    }
    assert!("bogus".parse::<Suite>().is_err());
}
