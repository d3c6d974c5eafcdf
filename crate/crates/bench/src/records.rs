//! Per-replicate records and their CSV form.

use std::io::{Read, Write};

use crate::error::{BenchError, Result};

/// First line of every records file.
pub const RECORDS_VERSION: &str = "# sparse-diff records v1";

pub const RECORD_COLUMNS: [&str; 19] = [
    "n",
    "p",
    "replicate",
    "seed",
    "gamma_n",
    "feas_gamma",
    "feas_6gamma",
    "epsilon_n",
    "kappa",
    "re",
    "f2",
    "finf",
    "err_l1",
    "err_l2",
    "err_linf",
    "bound_a_slack",
    "bound_c_slack",
    "solver_status",
    "runtime_ms",
];

/// One simulated replicate. Quantities that could not be computed are NaN;
/// a replicate that failed outright has `solver_status = "error: …"`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub n: usize,
    pub p: usize,
    pub replicate: usize,
    pub seed: u64,
    pub gamma_n: f64,
    /// `‖ψ_n(0;θ₀)‖_∞ ≤ γ_n`.
    pub feas_gamma: bool,
    /// `‖ψ_n(0;θ₀)‖_∞ ≤ 6γ_n`.
    pub feas_6gamma: bool,
    pub epsilon_n: f64,
    pub kappa: f64,
    pub re: f64,
    pub f2: f64,
    pub finf: f64,
    pub err_l1: f64,
    pub err_l2: f64,
    pub err_linf: f64,
    /// Bound (a) minus `‖θ̂ − θ₀‖₂²`.
    pub bound_a_slack: f64,
    /// Bound (c) minus `‖θ̂ − θ₀‖₁`; NaN when `κ² ≤ 4Sε_n`.
    pub bound_c_slack: f64,
    pub solver_status: String,
    pub runtime_ms: u64,
}

impl ReplicateRecord {
    pub fn failed(&self) -> bool {
        self.solver_status.starts_with("error")
    }

    fn to_row(&self) -> Vec<String> {
        let f = |v: f64| v.to_string();
        vec![
            self.n.to_string(),
            self.p.to_string(),
            self.replicate.to_string(),
            self.seed.to_string(),
            f(self.gamma_n),
            self.feas_gamma.to_string(),
            self.feas_6gamma.to_string(),
            f(self.epsilon_n),
            f(self.kappa),
            f(self.re),
            f(self.f2),
            f(self.finf),
            f(self.err_l1),
            f(self.err_l2),
            f(self.err_linf),
            f(self.bound_a_slack),
            f(self.bound_c_slack),
            self.solver_status.clone(),
            self.runtime_ms.to_string(),
        ]
    }

    fn from_row(row: &csv::StringRecord, line: u64) -> Result<Self> {
        if row.len() != RECORD_COLUMNS.len() {
            return Err(BenchError::Invalid(format!(
                "records line {line}: expected {} fields, found {}",
                RECORD_COLUMNS.len(),
                row.len()
            )));
        }
        let field = |i: usize| &row[i];
        fn parse<T: std::str::FromStr>(s: &str, col: &str, line: u64) -> Result<T> {
            s.trim().parse().map_err(|_| {
                BenchError::Invalid(format!("records line {line}: cannot parse {col} = `{s}`"))
            })
        }
        let num = |i: usize| parse::<f64>(field(i), RECORD_COLUMNS[i], line);
        let int = |i: usize| parse::<usize>(field(i), RECORD_COLUMNS[i], line);
        let flag = |i: usize| parse::<bool>(field(i), RECORD_COLUMNS[i], line);
        Ok(Self {
            n: int(0)?,
            p: int(1)?,
            replicate: int(2)?,
            seed: parse(field(3), "seed", line)?,
            gamma_n: num(4)?,
            feas_gamma: flag(5)?,
            feas_6gamma: flag(6)?,
            epsilon_n: num(7)?,
            kappa: num(8)?,
            re: num(9)?,
            f2: num(10)?,
            finf: num(11)?,
            err_l1: num(12)?,
            err_l2: num(13)?,
            err_linf: num(14)?,
            bound_a_slack: num(15)?,
            bound_c_slack: num(16)?,
            solver_status: field(17).to_string(),
            runtime_ms: parse(field(18), "runtime_ms", line)?,
        })
    }
}

pub fn write_records<W: Write>(records: &[ReplicateRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RECORDS_VERSION}")?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(RECORD_COLUMNS)?;
    for r in records {
        writer.write_record(r.to_row())?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a records file. The version line is required; the header row must
/// match [`RECORD_COLUMNS`].
pub fn read_records<R: Read>(mut input: R) -> Result<Vec<ReplicateRecord>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let body = match text.split_once('\n') {
        Some((first, rest)) if first.trim_end() == RECORDS_VERSION => rest,
        _ => {
            return Err(BenchError::Invalid(format!(
                "records file must start with `{RECORDS_VERSION}`"
            )))
        }
    };
    let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(RECORD_COLUMNS.iter().copied()) {
        return Err(BenchError::Invalid(format!(
            "unexpected records header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        out.push(ReplicateRecord::from_row(&row?, i as u64 + 3)?);
    }
    Ok(out)
}
