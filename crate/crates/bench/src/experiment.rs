//! Monte Carlo runs over a grid of sample sizes.

use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sparse_diff::factors::factor_report;
use sparse_diff::quasi_lik::{epsilon_n, j_matrix, score};
use sparse_diff::selector::estimate;
use sparse_diff::{simulate, Drift};

use crate::bounds::BoundConstants;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::plot::write_plots;
use crate::records::{write_records, ReplicateRecord};
use crate::summary::{summarize, write_summary, SummaryRow};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn bound_constants(config: &ExperimentConfig, n: usize) -> BoundConstants {
    BoundConstants {
        s: config.s,
        theta0_l1: config.theta0(config.p(n)).lp_norm(1),
        cov_bound: config.cov_bound,
    }
}

/// Simulates, estimates and measures one replicate. Module errors end up
/// in `solver_status` rather than aborting the run.
pub fn run_replicate(config: &ExperimentConfig, n: usize, replicate: usize) -> ReplicateRecord {
    let start = Instant::now();
    let p = config.p(n);
    let seed = config.replicate_seed(n, replicate);
    let gamma = config.tuning.gamma_n(n).unwrap_or(f64::NAN);
    let mut record = ReplicateRecord {
        n,
        p,
        replicate,
        seed,
        gamma_n: gamma,
        feas_gamma: false,
        feas_6gamma: false,
        epsilon_n: f64::NAN,
        kappa: f64::NAN,
        re: f64::NAN,
        f2: f64::NAN,
        finf: f64::NAN,
        err_l1: f64::NAN,
        err_l2: f64::NAN,
        err_linf: f64::NAN,
        bound_a_slack: f64::NAN,
        bound_c_slack: f64::NAN,
        solver_status: String::new(),
        runtime_ms: 0,
    };
    if let Err(e) = fill(config, &mut record) {
        record.solver_status = format!("error: {e}");
    }
    record.runtime_ms = start.elapsed().as_millis() as u64;
    record
}

fn fill(config: &ExperimentConfig, record: &mut ReplicateRecord) -> Result<()> {
    let spec = config.model_spec(record.n);
    let theta0 = &spec.theta0;
    let path = simulate(&spec, record.seed)?;
    let fit = estimate(&path, record.gamma_n)?;

    let psi0 = score(&path, theta0, Drift::Zero)?.amax();
    record.feas_gamma = psi0 <= record.gamma_n;
    record.feas_6gamma = psi0 <= 6.0 * record.gamma_n;
    record.epsilon_n = epsilon_n(&path, theta0)?;

    let support = spec.support();
    if !support.is_empty() {
        let report = factor_report(&j_matrix(&path)?, &support, &[2.0, f64::INFINITY])?;
        record.kappa = report.kappa.value;
        record.re = report.re.value;
        record.f2 = report.f_q[0].1.value;
        record.finf = report.f_q[1].1.value;
    }

    let err = &fit.theta_hat - theta0;
    record.err_l1 = err.lp_norm(1);
    record.err_l2 = err.norm();
    record.err_linf = err.amax();

    let constants = bound_constants(config, record.n);
    if let Some(b) = constants.bound_a(record) {
        record.bound_a_slack = b - record.err_l2 * record.err_l2;
    }
    if let Some(b) = constants.bound_c(record) {
        record.bound_c_slack = b - record.err_l1;
    }
    record.solver_status = fit.solver_status.to_string();
    if !fit.feasible {
        record.solver_status.push_str(";infeasible");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Sorted by `(n, replicate)`.
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every `(n, replicate)` pair on the rayon pool. The result does not
/// depend on the pool size.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let mut records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(n, r)| run_replicate(config, n, r))
        .collect();
    records.sort_by_key(|r| (r.n, r.replicate));
    let summary = summarize(config, &records);
    Ok(ExperimentOutput { records, summary })
}

/// Writes `records.csv`, `summary.csv` and the error plots into `dir`.
pub fn write_outputs(output: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_records(&output.records, BufWriter::new(fs::File::create(dir.join(RECORDS_FILE))?))?;
    write_summary(&output.summary, BufWriter::new(fs::File::create(dir.join(SUMMARY_FILE))?))?;
    write_plots(&output.summary, dir)?;
    Ok(())
}
