//! The `sparse-diff` command line.

use std::ffi::OsString;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use sparse_diff::factors::factor_report;
use sparse_diff::model::{generate_covariates, simulate_recorded};
use sparse_diff::pathfile::{load_path, save_path};
use sparse_diff::quasi_lik::{j_matrix, score_decomposition, score_report};
use sparse_diff::selector::estimate;
use sparse_diff::{simulate, Drift};

use crate::bounds::verify_bounds;
use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::experiment::{bound_constants, run_experiment, write_outputs, RECORDS_FILE, SUMMARY_FILE};
use crate::plot::write_plots;
use crate::records::read_records;
use crate::summary::read_summary;

#[derive(Debug, Parser)]
#[command(name = "sparse-diff", version, about = "Sparse diffusion-coefficient estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Experiment config file; the built-in reference design when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::parse(&fs::read_to_string(path)?),
            None => Ok(ExperimentConfig::reference()),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one path and write it to a path file.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        /// Sample size; defaults to the first entry of n_grid.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the score, its sup-norm and ε at θ for a path file.
    Score {
        #[arg(long)]
        path: PathBuf,
        /// Comma-separated θ; zero when omitted.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        /// Also print the decomposition of the score, re-simulating the fine
        /// grid from the seeds in the path file. Needs the generating config.
        #[arg(long)]
        decompose: bool,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run the Dantzig selector on a path file.
    Estimate {
        #[arg(long)]
        path: PathBuf,
        /// Constraint radius; from the config's tuning rule when omitted.
        #[arg(long)]
        gamma: Option<f64>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Cone factors of J_n for a path file, or of a matrix file.
    Factors {
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        path: Option<PathBuf>,
        /// Whitespace- or comma-separated rows of a symmetric PSD matrix.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Comma-separated support indices (0-based).
        #[arg(long)]
        support: String,
        /// Comma-separated q values; `inf` for F_∞.
        #[arg(long, default_value = "2,inf")]
        q: String,
    },
    /// Run a Monte Carlo experiment and write records, summary and plots.
    Experiment {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit the error bounds on a records file.
    Verify {
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Regenerate the SVG plots from a summary file.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs the CLI on `args` (program name first), writing to `out`, and
/// returns the exit code: 0 on success, 1 on invalid input, 2 on I/O errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate { config, n, seed, out: dest } => {
            let config = config.load()?;
            let n = n.unwrap_or(config.n_grid[0]);
            let path = simulate(&config.model_spec(n), seed)?;
            save_path(&path, &dest)?;
            writeln!(out, "wrote {} (n = {n}, p = {})", dest.display(), path.p())?;
        }
        Command::Score { path, theta, decompose, config } => {
            let path = load_path(&path)?;
            let theta = match theta {
                Some(t) => parse_vector(&t, path.p())?,
                None => DVector::zeros(path.p()),
            };
            let report = score_report(&path, &theta, Drift::Zero)?;
            writeln!(out, "psi = {}", join(report.psi.iter()))?;
            writeln!(out, "sup|psi| = {}", report.psi.amax())?;
            writeln!(out, "epsilon = {}", report.epsilon_n)?;
            if decompose {
                let config = config.load()?;
                let spec = config.model_spec(path.n);
                if spec.digest() != path.meta.spec_digest {
                    return Err(BenchError::Invalid(
                        "path file was not simulated from this config".into(),
                    ));
                }
                let cov = generate_covariates(&spec, path.meta.covariate_seed)?;
                let record = simulate_recorded(&spec, &cov, path.meta.brownian_seed)?;
                if record.observed != path {
                    return Err(BenchError::Invalid("re-simulation does not reproduce the path".into()));
                }
                let parts = score_decomposition(&record, spec.drift)?;
                for (name, v) in [("A", &parts.a), ("B", &parts.b), ("C", &parts.c), ("D", &parts.d), ("E", &parts.e)] {
                    writeln!(out, "{name} = {}", join(v.iter()))?;
                }
            }
        }
        Command::Estimate { path, gamma, config } => {
            let path = load_path(&path)?;
            let gamma = match gamma {
                Some(g) => g,
                None => config.load()?.tuning.gamma_n(path.n)?,
            };
            let fit = estimate(&path, gamma)?;
            writeln!(out, "gamma = {gamma}")?;
            writeln!(out, "theta_hat = {}", join(fit.theta_hat.iter()))?;
            writeln!(out, "l1 = {}", fit.objective)?;
            writeln!(out, "feasible = {}", fit.feasible)?;
            writeln!(out, "status = {}", fit.solver_status)?;
            writeln!(out, "rounds = {}", fit.iterations)?;
        }
        Command::Factors { path, matrix, support, q } => {
            let j = match (path, matrix) {
                (Some(p), _) => j_matrix(&load_path(&p)?)?,
                (None, Some(m)) => read_matrix(&m)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let support: Vec<usize> = parse_list(&support, "support")?;
            let qs: Vec<f64> = q
                .split(',')
                .map(|s| match s.trim() {
                    "inf" | "∞" => Ok(f64::INFINITY),
                    t => t.parse().map_err(|_| BenchError::Invalid(format!("bad q `{t}`"))),
                })
                .collect::<Result<_>>()?;
            let report = factor_report(&j, &support, &qs)?;
            writeln!(out, "kappa = {} ({})", report.kappa.value, report.kappa.method)?;
            writeln!(out, "re = {} ({})", report.re.value, report.re.method)?;
            for (q, v) in &report.f_q {
                writeln!(out, "f_{q} = {} ({})", v.value, v.method)?;
            }
            for line in report.ordering_check() {
                writeln!(out, "ordering: {line}")?;
            }
        }
        Command::Experiment { config, seed, out: dest } => {
            let mut config = config.load()?;
            if let Some(seed) = seed {
                config.master_seed = seed;
            }
            if let Some(dest) = dest {
                config.output_dir = dest;
            }
            let output = run_experiment(&config)?;
            write_outputs(&output, &config.output_dir)?;
            for row in &output.summary {
                writeln!(
                    out,
                    "n = {}: median errors l1 {:.4} l2 {:.4} linf {:.4}, feasible(6γ) {:.2}",
                    row.n, row.err_l1.median, row.err_l2.median, row.err_linf.median, row.feas_6gamma_frac
                )?;
            }
            writeln!(
                out,
                "wrote {} and {} to {}",
                RECORDS_FILE,
                SUMMARY_FILE,
                config.output_dir.display()
            )?;
        }
        Command::Verify { records, config } => {
            let config = config.load()?;
            let records = read_records(BufReader::new(fs::File::open(&records)?))?;
            let n = records.first().map_or(config.n_grid[0], |r| r.n);
            let report = verify_bounds(&records, &bound_constants(&config, n))?;
            write!(out, "{}", report.render())?;
        }
        Command::Plot { summary, out: dest } => {
            let rows = read_summary(BufReader::new(fs::File::open(&summary)?))?;
            fs::create_dir_all(&dest)?;
            write_plots(&rows, &dest)?;
            writeln!(out, "wrote plots to {}", dest.display())?;
        }
    }
    Ok(())
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| BenchError::Invalid(format!("cannot parse {what} entry `{}`", s.trim())))
        })
        .collect()
}

fn parse_vector(text: &str, p: usize) -> Result<DVector<f64>> {
    let v: Vec<f64> = parse_list(text, "theta")?;
    if v.len() != p {
        return Err(BenchError::Invalid(format!("theta has {} entries, path has p = {p}", v.len())));
    }
    Ok(DVector::from_vec(v))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| BenchError::Invalid(format!("bad matrix entry `{s}`"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let p = rows.len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(BenchError::Invalid("matrix file must hold a square matrix".into()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

/// Entry point of the binary.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}
