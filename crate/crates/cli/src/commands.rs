use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use spectral_ot::experiments::{CloudPair, CloudSpec};
use spectral_ot::flows::{
    euler_flow, gaussian_affine_flow, AffineFlowOptions, EntropyToGaussianTarget, FlowStatus, FlowTrace,
    ParticleFlowOptions,
};
use spectral_ot::gaussian_bures::{brenier_map_from_solution, gaussian_cost, BrenierOutcome, GaussianCostSolution, GaussianOptions};
use spectral_ot::geometry::suites::{run_suite, Suite, SuiteConfig, SuiteReport};
use spectral_ot::geometry::Status;
use spectral_ot::io::{fmt_f64, write_json, CsvTable};
use spectral_ot::measures::{DiscreteMeasure, GaussianMeasure};
use spectral_ot::psd_norms::{NormSpec, PsdMatrix};
use spectral_ot::static_solver::{
    certify, grid_oracle, matched_pairs, spectral_wasserstein, CertificateReport, SolverOptions, StaticSolution,
};

use crate::failure::{p_label, parse_p, read_input, Failure};
use crate::{CheckArgs, CoupleArgs, FlowArgs, FlowMode, GaussianArgs, OracleArgs};

#[derive(Serialize)]
pub struct PlanEntry {
    pub source_idx: usize,
    pub target_idx: usize,
    pub mass: f64,
}

#[derive(Serialize)]
pub struct OracleSummary {
    pub grid: usize,
    pub value_sq: f64,
    pub relative_difference: f64,
}

#[derive(Serialize)]
pub struct CouplingOutput {
    pub norm: NormSpec,
    pub value_sq: f64,
    pub value: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub q_star: PsdMatrix,
    pub plan: Vec<PlanEntry>,
    pub certificate: CertificateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

impl CouplingOutput {
    pub fn new(sol: &StaticSolution) -> Result<Self, Failure> {
        Ok(Self {
            norm: sol.norm,
            value_sq: sol.value_sq,
            value: sol.value(),
            upper_bound: sol.upper_bound,
            gap: sol.gap,
            relative_gap: sol.relative_gap(),
            iterations: sol.iterations,
            converged: sol.converged,
            q_star: sol.q_star.clone(),
            plan: sol
                .coupling
                .sparse_entries(0.0)
                .into_iter()
                .map(|(i, j, mass)| PlanEntry { source_idx: i, target_idx: j, mass })
                .collect(),
            certificate: certify(sol)?,
            oracle: None,
        })
    }
}

pub fn pairs_csv(sol: &StaticSolution) -> CsvTable {
    let mut t = CsvTable::new(&["source_idx", "target_idx", "mass", "tie"]);
    for m in matched_pairs(&sol.coupling) {
        t.push(vec![
            m.source_idx.to_string(),
            m.target_idx.to_string(),
            fmt_f64(m.mass),
            u8::from(m.tie).to_string(),
        ]);
    }
    t
}

fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn couple(a: &CoupleArgs) -> Result<(), Failure> {
    let p = parse_p(&a.p)?;
    let source: Arc<DiscreteMeasure> = Arc::new(read_input(&a.source)?);
    let target: Arc<DiscreteMeasure> = Arc::new(read_input(&a.target)?);
    let opts = SolverOptions { max_outer_iters: a.max_iters, stop_gap: a.stop_gap, ..SolverOptions::default() };
    let norm = NormSpec::schatten(p)?;
    let sol = spectral_wasserstein(&source, &target, norm, &opts)?;
    let mut out = CouplingOutput::new(&sol)?;
    if let Some(grid) = a.oracle_grid {
        let value_sq = grid_oracle(&source, &target, norm, grid, grid)?;
        out.oracle = Some(OracleSummary { grid, value_sq, relative_difference: relative_difference(sol.value_sq, value_sq) });
    }
    write_json(&a.out, &out)?;
    if let Some(path) = &a.pairs {
        pairs_csv(&sol).write(path)?;
    }
    println!(
        "p={} value_sq={} gap={} iterations={}",
        p_label(p),
        fmt_f64(sol.value_sq),
        fmt_f64(sol.gap),
        sol.iterations
    );
    if !sol.converged {
        return Err(Failure::NonConvergence(format!(
            "relative gap {} after {} iterations",
            fmt_f64(sol.relative_gap()),
            sol.iterations
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct MapOutput {
    #[serde(with = "spectral_ot::io::dmatrix_rows")]
    a: nalgebra::DMatrix<f64>,
    #[serde(with = "spectral_ot::io::dvector_list")]
    b: nalgebra::DVector<f64>,
}

#[derive(Serialize)]
struct GaussianOutput {
    #[serde(flatten)]
    solution: GaussianCostSolution,
    value: f64,
    brenier_map: Option<MapOutput>,
}

pub fn gaussian(a: &GaussianArgs) -> Result<(), Failure> {
    let p = parse_p(&a.p)?;
    let mu0: GaussianMeasure = read_input(&a.m0)?;
    let mu1: GaussianMeasure = read_input(&a.m1)?;
    let opts = GaussianOptions { max_iters: a.max_iters, ..GaussianOptions::default() };
    let sol = gaussian_cost(&mu0, &mu1, NormSpec::schatten(p)?, &opts)?;
    let brenier_map = match brenier_map_from_solution(&sol, &mu0, &mu1) {
        Ok(BrenierOutcome::Map(m)) => Some(MapOutput { a: m.a, b: m.b }),
        _ => None,
    };
    let converged = sol.converged;
    let iterations = sol.iterations;
    let out = GaussianOutput { value: sol.value(), solution: sol, brenier_map };
    write_json(&a.out, &out)?;
    println!(
        "p={} value_sq={} deterministic={}",
        p_label(p),
        fmt_f64(out.solution.value_sq),
        out.solution.deterministic
    );
    if !converged {
        return Err(Failure::NonConvergence(format!("iteration budget exhausted after {iterations} iterations")));
    }
    Ok(())
}

fn read_cloud(path: &Option<std::path::PathBuf>, fallback: CloudSpec) -> Result<CloudSpec, Failure> {
    match path {
        Some(p) => read_input(p),
        None => Ok(fallback),
    }
}

fn finish_trace(trace: &FlowTrace, csv: &Path, json: Option<&Path>) -> Result<(), Failure> {
    trace.to_csv().write(csv)?;
    if let Some(path) = json {
        write_json(path, trace)?;
    }
    println!(
        "p={} steps={} initial={} final={}",
        p_label(trace.p),
        trace.steps.len().saturating_sub(1),
        fmt_f64(trace.initial_objective()),
        fmt_f64(trace.final_objective())
    );
    match trace.status {
        FlowStatus::Completed => Ok(()),
        FlowStatus::Diverged { step } => Err(Failure::NonConvergence(format!("flow diverged at step {step}"))),
    }
}

pub fn flow(a: &FlowArgs) -> Result<(), Failure> {
    let p = parse_p(&a.p)?;
    let trace = match a.mode {
        FlowMode::Particle => {
            let pair = CloudPair {
                seed: a.seed,
                n: a.n,
                m: a.m,
                source: read_cloud(&a.source_cfg, CloudSpec::reference_source())?,
                target: read_cloud(&a.target_cfg, CloudSpec::reference_target())?,
            };
            let (x0, y) = pair.draw()?;
            let mut opts = ParticleFlowOptions::for_exponent(p, a.n);
            if let Some(eta) = a.eta {
                opts.eta = eta;
            }
            opts.steps = a.steps;
            opts.snapshot_every = a.snapshot_every;
            opts.eps = a.eps;
            euler_flow(&x0, &y, p, &opts)?
        }
        FlowMode::Gaussian => {
            let (Some(m0), Some(reference)) = (&a.m0, &a.reference) else {
                return Err(Failure::Usage("gaussian mode needs --m0 and --reference".into()));
            };
            let mu0: GaussianMeasure = read_input(m0)?;
            let nu: GaussianMeasure = read_input(reference)?;
            let spec = EntropyToGaussianTarget::new(nu)?;
            gaussian_affine_flow(&mu0, &spec, p, &AffineFlowOptions { dt: a.dt, steps: a.steps })?
        }
    };
    finish_trace(&trace, &a.trace, a.out.as_deref())
}

#[derive(Serialize)]
struct CheckOutput {
    suite: Suite,
    seed: u64,
    passed: bool,
    reports: Vec<SuiteReport>,
}

pub fn check(a: &CheckArgs) -> Result<(), Failure> {
    let suite: Suite = a.suite.parse().map_err(|e: spectral_ot::error::Error| Failure::Usage(e.to_string()))?;
    let ps = match &a.p {
        Some(raw) => vec![parse_p(raw)?],
        None => vec![2.0, f64::INFINITY],
    };
    if a.instances == 0 {
        return Err(Failure::Usage("--instances must be positive".into()));
    }
    let mut reports = Vec::new();
    for p in ps {
        let cfg = SuiteConfig { instances: a.instances, ..SuiteConfig::new(p, a.seed) };
        let rep = run_suite(suite, &cfg)?;
        for c in &rep.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Warn => "WARN",
                Status::Fail => "FAIL",
            };
            println!("{tag} p={} {}: measured {} threshold {} ({})", p_label(p), c.name, fmt_f64(c.measured), fmt_f64(c.threshold), c.detail);
        }
        reports.push(rep);
    }
    let passed = reports.iter().all(SuiteReport::passed);
    if let Some(path) = &a.report {
        write_json(path, &CheckOutput { suite, seed: a.seed, passed, reports })?;
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Assertion("one or more checks failed".into()))
    }
}

#[derive(Serialize)]
struct OracleOutput {
    norm: NormSpec,
    grid: usize,
    oracle_value_sq: f64,
    solver_value_sq: f64,
    solver_upper_bound: f64,
    relative_difference: f64,
    tolerance: f64,
    agrees: bool,
}

pub fn oracle(a: &OracleArgs) -> Result<(), Failure> {
    let p = parse_p(&a.p)?;
    let norm = NormSpec::schatten(p)?;
    let source: Arc<DiscreteMeasure> = Arc::new(read_input(&a.source)?);
    let target: Arc<DiscreteMeasure> = Arc::new(read_input(&a.target)?);
    let oracle_value_sq = grid_oracle(&source, &target, norm, a.grid, a.grid)?;
    let sol = spectral_wasserstein(&source, &target, norm, &SolverOptions::default())?;
    let rel = relative_difference(sol.value_sq, oracle_value_sq);
    let out = OracleOutput {
        norm,
        grid: a.grid,
        oracle_value_sq,
        solver_value_sq: sol.value_sq,
        solver_upper_bound: sol.upper_bound,
        relative_difference: rel,
        tolerance: a.tol,
        agrees: rel <= a.tol,
    };
    if let Some(path) = &a.out {
        write_json(path, &out)?;
    }
    println!(
        "p={} oracle={} solver={} rel_diff={}",
        p_label(p),
        fmt_f64(oracle_value_sq),
        fmt_f64(sol.value_sq),
        fmt_f64(rel)
    );
    if !sol.converged {
        return Err(Failure::NonConvergence("static solver did not reach its gap tolerance".into()));
    }
    if !out.agrees {
        return Err(Failure::Assertion(format!("oracle and solver differ by {} > {}", fmt_f64(rel), fmt_f64(a.tol))));
    }
    Ok(())
}
