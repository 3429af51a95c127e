use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use spectral_ot::experiments::CloudPair;
use spectral_ot::flows::{euler_flow, FlowStatus, ParticleFlowOptions};
use spectral_ot::io::{fmt_f64, write_json, CsvTable};
use spectral_ot::measures::DiscreteMeasure;
use spectral_ot::psd_norms::NormSpec;
use spectral_ot::static_solver::{spectral_wasserstein, SolverOptions};

use crate::commands::{pairs_csv, CouplingOutput};
use crate::failure::{p_label, parse_p, Failure};

const EXPONENTS: [f64; 3] = [1.0, 2.0, f64::INFINITY];

fn cloud_csv(x: &DMatrix<f64>) -> CsvTable {
    let header: Vec<String> = (0..x.ncols()).map(|c| format!("x{c}")).collect();
    let mut t = CsvTable::new(&header);
    for i in 0..x.nrows() {
        t.push_numeric(&x.row(i).iter().copied().collect::<Vec<_>>());
    }
    t
}

#[derive(Serialize)]
struct Figure1Entry {
    p: String,
    value_sq: f64,
    gap: f64,
    converged: bool,
}

#[derive(Serialize)]
struct Figure1Summary {
    pair: CloudPair,
    couplings: Vec<Figure1Entry>,
    ordered: bool,
}

pub fn figure1(seed: u64, out_dir: &Path) -> Result<(), Failure> {
    let pair = CloudPair { seed, ..CloudPair::default() };
    let (x, y) = pair.draw()?;
    cloud_csv(&x).write(&out_dir.join("source.csv"))?;
    cloud_csv(&y).write(&out_dir.join("target.csv"))?;
    let source = Arc::new(DiscreteMeasure::uniform(x)?);
    let target = Arc::new(DiscreteMeasure::uniform(y)?);

    let mut entries = Vec::new();
    let mut stalled = Vec::new();
    for p in EXPONENTS {
        let sol = spectral_wasserstein(&source, &target, NormSpec::schatten(p)?, &SolverOptions::default())?;
        let label = p_label(p);
        write_json(&out_dir.join(format!("coupling_p{label}.json")), &CouplingOutput::new(&sol)?)?;
        pairs_csv(&sol).write(&out_dir.join(format!("pairs_p{label}.csv")))?;
        println!("p={label} value_sq={} gap={} iterations={}", fmt_f64(sol.value_sq), fmt_f64(sol.gap), sol.iterations);
        if !sol.converged {
            stalled.push(label.clone());
        }
        entries.push(Figure1Entry { p: label, value_sq: sol.value_sq, gap: sol.gap, converged: sol.converged });
    }
    let v: Vec<f64> = entries.iter().map(|e| e.value_sq).collect();
    let slack = 1e-9 * v[0].abs();
    let ordered = v[2] <= v[1] + slack && v[1] <= v[0] + slack;
    write_json(&out_dir.join("summary.json"), &Figure1Summary { pair, couplings: entries, ordered })?;
    if !stalled.is_empty() {
        return Err(Failure::NonConvergence(format!("static solver stalled for p in {stalled:?}")));
    }
    if !ordered {
        return Err(Failure::Assertion("values are not ordered W_inf <= W_2 <= W_1".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct Figure2Entry {
    p: String,
    eta: f64,
    steps: usize,
    initial: f64,
    final_value: f64,
    ratio: f64,
    nonincreasing: bool,
    passed: bool,
}

#[derive(Serialize)]
struct Figure2Summary {
    pair: CloudPair,
    eps: f64,
    flows: Vec<Figure2Entry>,
}

pub fn figure2(p: Option<&str>, seed: u64, steps: usize, snapshot_every: usize, out_dir: &Path) -> Result<(), Failure> {
    let ps = match p {
        Some(raw) => vec![parse_p(raw)?],
        None => EXPONENTS.to_vec(),
    };
    let pair = CloudPair { seed, ..CloudPair::default() };
    let (x0, y) = pair.draw()?;
    let mut flows = Vec::new();
    let mut eps = 0.0;
    for p in ps {
        let mut opts = ParticleFlowOptions::for_exponent(p, pair.n);
        opts.steps = steps;
        opts.snapshot_every = snapshot_every;
        eps = opts.eps;
        let trace = euler_flow(&x0, &y, p, &opts)?;
        let label = p_label(p);
        trace.to_csv().write(&out_dir.join(format!("trace_p{label}.csv")))?;
        let (initial, final_value) = (trace.initial_objective(), trace.final_objective());
        let ratio = final_value / initial;
        let nonincreasing = trace.is_nonincreasing(0.0);
        let passed = trace.status == FlowStatus::Completed && nonincreasing && ratio <= 0.05;
        println!(
            "p={label} eta={} initial={} final={} ratio={} nonincreasing={nonincreasing}",
            fmt_f64(opts.eta),
            fmt_f64(initial),
            fmt_f64(final_value),
            fmt_f64(ratio)
        );
        flows.push(Figure2Entry { p: label, eta: opts.eta, steps, initial, final_value, ratio, nonincreasing, passed });
        if let FlowStatus::Diverged { step } = trace.status {
            write_json(&out_dir.join("summary.json"), &Figure2Summary { pair, eps, flows })?;
            return Err(Failure::NonConvergence(format!("flow p={} diverged at step {step}", p_label(p))));
        }
    }
    let failed: Vec<String> = flows.iter().filter(|f| !f.passed).map(|f| f.p.clone()).collect();
    write_json(&out_dir.join("summary.json"), &Figure2Summary { pair, eps, flows })?;
    if !failed.is_empty() {
        return Err(Failure::Assertion(format!(
            "flows for p in {failed:?} are not monotone or did not reach 5% of the initial MMD^2"
        )));
    }
    Ok(())
}
