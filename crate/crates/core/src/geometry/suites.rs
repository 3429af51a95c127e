//! Named check suites: metric, geodesic, action, convexity, quotient.

use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::*;
use crate::experiments::{labeled_rng, random_measure};
use crate::measures::GaussianMeasure;
use crate::psd_norms::{comparison_constants, PsdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Metric,
    Geodesic,
    Action,
    Convexity,
    Quotient,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metric" => Ok(Suite::Metric),
            "geodesic" => Ok(Suite::Geodesic),
            "action" => Ok(Suite::Action),
            "convexity" => Ok(Suite::Convexity),
            "quotient" => Ok(Suite::Quotient),
            "all" => Ok(Suite::All),
            other => Err(Error::InvalidArgument(format!("unknown suite '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub p: f64,
    pub seed: u64,
    /// Random instances per property.
    pub instances: usize,
    /// Triples for the sampled triangle inequality.
    pub triples: usize,
    /// Mass-splitting perturbations for the quotient identity.
    pub splits: usize,
    /// Atoms per random measure.
    pub atoms: usize,
}

impl SuiteConfig {
    pub fn new(p: f64, seed: u64) -> Self {
        Self { p, seed, instances: 10, triples: 30, splits: 50, atoms: 4 }
    }

    fn norm(&self) -> Result<NormSpec> {
        NormSpec::schatten(self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    #[serde(with = "crate::io::exponent")]
    pub p: f64,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }
}

pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Metric => metric_suite(cfg)?,
        Suite::Geodesic => geodesic_suite(cfg)?,
        Suite::Action => action_suite(cfg)?,
        Suite::Convexity => convexity_suite(cfg)?,
        Suite::Quotient => quotient_suite(cfg)?,
        Suite::All => {
            let mut all = metric_suite(cfg)?;
            all.extend(geodesic_suite(cfg)?);
            all.extend(action_suite(cfg)?);
            all.extend(convexity_suite(cfg)?);
            all.extend(quotient_suite(cfg)?);
            all
        }
    };
    Ok(SuiteReport { suite, p: cfg.p, seed: cfg.seed, checks })
}

fn solve(a: &Arc<DiscreteMeasure>, b: &Arc<DiscreteMeasure>, norm: NormSpec) -> Result<StaticSolution> {
    spectral_wasserstein(a, b, norm, &SolverOptions::default())
}

fn measure(rng: &mut impl Rng, cfg: &SuiteConfig, d: usize, shift: f64) -> Result<Arc<DiscreteMeasure>> {
    Ok(Arc::new(random_measure(rng, cfg.atoms, d, shift, false)?))
}

pub fn metric_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let norm = cfg.norm()?;
    let mut rng = labeled_rng(cfg.seed, "metric");
    let mut out = Vec::new();

    let mut sandwich: f64 = 0.0;
    let mut symmetry: f64 = 0.0;
    for k in 0..cfg.instances {
        let d = 2 + k % 2;
        let a = measure(&mut rng, cfg, d, 0.0)?;
        let b = measure(&mut rng, cfg, d, 1.0)?;
        let ab = solve(&a, &b, norm)?;
        let ba = solve(&b, &a, norm)?;
        let w2 = solve(&a, &b, NormSpec::trace())?.value_sq;
        let (c, big_c) = comparison_constants(cfg.p, d)?;
        let lo = (c * w2 - ab.value_sq) / w2.max(1e-300);
        let hi = (ab.value_sq - big_c * w2) / w2.max(1e-300);
        sandwich = sandwich.max(lo).max(hi);
        let rel = (ab.value() - ba.value()).abs() / ab.value().max(1e-300);
        symmetry = symmetry.max(rel);
    }
    out.push(Check::bound(
        "norm sandwich",
        sandwich,
        1e-6,
        Status::Fail,
        format!("{} instances, d in {{2,3}}; relative excess over c W2^2 <= W^2 <= C W2^2", cfg.instances),
    ));
    out.push(Check::bound(
        "symmetry",
        symmetry,
        1e-6,
        Status::Fail,
        format!("{} instances; relative |W(mu,nu) - W(nu,mu)|", cfg.instances),
    ));

    let mut triangle = f64::NEG_INFINITY;
    for _ in 0..cfg.triples {
        let a = measure(&mut rng, cfg, 2, 0.0)?;
        let b = measure(&mut rng, cfg, 2, 0.5)?;
        let c = measure(&mut rng, cfg, 2, 1.0)?;
        let ac = solve(&a, &c, norm)?.value();
        let ab = solve(&a, &b, norm)?.value();
        let bc = solve(&b, &c, norm)?.value();
        triangle = triangle.max(ac - ab - bc);
    }
    out.push(Check::bound(
        "triangle inequality",
        triangle,
        1e-4,
        Status::Fail,
        format!("{} triples; max W(a,c) - W(a,b) - W(b,c)", cfg.triples),
    ));

    let m = 3.0;
    let (direct, via) = nonspectral_triangle(m)?;
    out.push(Check::bound(
        "non-spectral triangle violation",
        (direct - (2.0 + m).sqrt()).abs() + (via - 2.0).abs() + (via - direct).max(0.0),
        1e-12,
        Status::Fail,
        format!("M = {m}: direct {direct:.12}, through e1 {via:.12}"),
    ));
    Ok(out)
}

pub fn geodesic_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let norm = cfg.norm()?;
    let mut rng = labeled_rng(cfg.seed, "geodesic");
    let pairs = [(0.0, 0.25), (0.25, 0.75)];
    let mut speed: f64 = 0.0;
    let mut fidelity: f64 = 0.0;
    for _ in 0..cfg.instances {
        let a = measure(&mut rng, cfg, 2, 0.0)?;
        let b = measure(&mut rng, cfg, 2, 1.0)?;
        let report = constant_speed_check(&a, &b, norm, &pairs, &SolverOptions::default())?;
        speed = speed.max(report.max_relative_deviation);
        let sol = solve(&a, &b, norm)?;
        for (t, end) in [(0.0, &a), (1.0, &b)] {
            let mt = geodesic_interpolate(&sol, t)?;
            let dev = (mt.points() - end.points()).amax().max(
                mt.weights().iter().zip(end.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
            );
            fidelity = fidelity.max(dev);
        }
    }
    Ok(vec![
        Check::bound(
            "endpoint fidelity",
            fidelity,
            1e-12,
            Status::Fail,
            format!("{} instances; mu_0 and mu_1 against the marginals", cfg.instances),
        ),
        Check::bound(
            "constant speed",
            speed,
            1e-3,
            Status::Fail,
            format!("{} instances; (s,t) in {{(0,.25),(.25,.75)}}", cfg.instances),
        ),
    ])
}

pub fn action_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let norm = cfg.norm()?;
    let mut rng = labeled_rng(cfg.seed, "action");
    let mut identity: f64 = 0.0;
    let mut certified: f64 = f64::NEG_INFINITY;
    let mut jitter_margin = f64::INFINITY;
    for _ in 0..cfg.instances {
        let a = measure(&mut rng, cfg, 2, 0.0)?;
        let b = measure(&mut rng, cfg, 2, 1.0)?;
        let sol = solve(&a, &b, norm)?;
        let rep = action_identity_check(&sol, 16)?;
        identity = identity.max((rep.action - rep.coupling_cost).abs() / rep.coupling_cost.max(1.0));
        certified = certified.max((rep.action - rep.value_sq).abs() - sol.gap.max(0.0));
        let deltas: Vec<DVector<f64>> = (0..support_size(&sol.coupling))
            .map(|_| DVector::from_fn(2, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let jittered = jittered_action(&sol, &deltas)?;
        jitter_margin = jitter_margin.min(jittered - rep.action);
    }
    Ok(vec![
        Check::bound(
            "action identity",
            identity,
            1e-10,
            Status::Fail,
            format!("{} instances; discretized action against gamma(Sigma(pi))", cfg.instances),
        ),
        Check::bound(
            "action within certified gap",
            certified,
            1e-10,
            Status::Fail,
            "max |action - value_sq| - gap".into(),
        ),
        Check::bound(
            "jittered path exceeds static value",
            -jitter_margin,
            0.0,
            Status::Fail,
            format!("smallest excess {jitter_margin:.3e}"),
        ),
    ])
}

pub fn convexity_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let norm = cfg.norm()?;
    let mut rng = labeled_rng(cfg.seed, "convexity");
    let times: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    let root = DMatrix::<f64>::from_fn(2, 2, |_, _| rng.sample(StandardNormal));
    let a_mat = &root * root.transpose() + DMatrix::identity(2, 2) * 0.5;
    let potentials = [
        ("half squared norm", Potential::HalfSquaredNorm),
        ("quadratic", Potential::Quadratic(a_mat)),
    ];
    let mut out = Vec::new();
    for (label, h) in &potentials {
        let kappa = h.kappa()?;
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..cfg.instances {
            let a = measure(&mut rng, cfg, 2, 0.0)?;
            let b = measure(&mut rng, cfg, 2, 1.0)?;
            let sol = solve(&a, &b, norm)?;
            let rep = linear_convexity_probe(h, &sol, kappa, &times)?;
            worst = worst.max(rep.max_violation - rep.slack);
        }
        out.push(Check::bound(
            format!("linear convexity ({label})"),
            worst,
            0.0,
            Status::Fail,
            format!("kappa {kappa:.6}; max violation beyond slack"),
        ));
    }

    let concave = Potential::Quadratic(-DMatrix::<f64>::identity(2, 2));
    let a = Arc::new(DiscreteMeasure::dirac(&[0.0, 0.0])?);
    let b = Arc::new(DiscreteMeasure::dirac(&[2.0, 0.0])?);
    let rep = linear_convexity_probe(&concave, &solve(&a, &b, norm)?, 0.0, &times)?;
    out.push(Check::bound(
        "concave potential detected",
        -rep.max_violation,
        -rep.slack,
        Status::Fail,
        format!("violation {:.6} for -|x|^2/2 with kappa 0", rep.max_violation),
    ));

    let mu0 = GaussianMeasure::new(DVector::from_vec(vec![0.0, 0.0]), PsdMatrix::diagonal(&[1.0, 2.0])?)?;
    let mu1 = GaussianMeasure::new(
        DVector::from_vec(vec![1.0, -0.5]),
        PsdMatrix::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.8]))?,
    )?;
    let nu = GaussianMeasure::isotropic(2, 1.5)?;
    let ent = gaussian_entropy_probe(&mu0, &mu1, &nu, norm, &times)?;
    out.push(Check::bound(
        "entropy convexity along computed geodesic",
        ent.max_violation,
        1e-6,
        Status::Warn,
        format!("kappa {:.6}; advisory", ent.kappa),
    ));
    Ok(out)
}

pub fn quotient_suite(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut rng = labeled_rng(cfg.seed, "quotient");
    let d = 3;
    let target = {
        let r = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        &r * r.transpose()
    };
    let mut objective: f64 = 0.0;
    let mut projection: f64 = 0.0;
    for _ in 0..cfg.splits {
        let mu = random_measure(&mut rng, 5, d, -1.0, true)?;
        let idx = rng.random_range(0..mu.len());
        let s = rng.random::<f64>();
        let split = split_atom(&mu, idx, s)?;
        let f0 = second_moment_objective(&mu, &target);
        let f1 = second_moment_objective(&split, &target);
        objective = objective.max((f0 - f1).abs());
        projection = projection.max(spherical_distance(&spherical_projection(&mu), &spherical_projection(&split)));
    }
    Ok(vec![
        Check::bound(
            "quotient objective invariance",
            objective,
            1e-10,
            Status::Fail,
            format!("{} splits; max |f(mu) - f(mu')|", cfg.splits),
        ),
        Check::bound(
            "spherical projection invariance",
            projection,
            1e-10,
            Status::Fail,
            format!("{} splits; max mass deviation after merging directions", cfg.splits),
        ),
    ])
}

fn spherical_distance(a: &SphericalMeasure, b: &SphericalMeasure) -> f64 {
    let (ca, cb) = (a.canonical(1e-9), b.canonical(1e-9));
    if ca.len() != cb.len() {
        return f64::INFINITY;
    }
    ca.iter()
        .zip(&cb)
        .map(|((da, ma), (db, mb))| {
            let dir = da.iter().zip(db).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            dir.max((ma - mb).abs())
        })
        .fold(0.0, f64::max)
}
