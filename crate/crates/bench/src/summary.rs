//! Per-`n` aggregates of replicate records.

use std::io::{Read, Write};

use sparse_diff::stats::quantile;

use crate::bounds::verify_bounds;
use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::experiment::bound_constants;
use crate::records::ReplicateRecord;

pub const SUMMARY_COLUMNS: [&str; 24] = [
    "n",
    "p",
    "replicates",
    "errors",
    "feas_gamma_frac",
    "feas_6gamma_frac",
    "err_l1_median",
    "err_l1_q25",
    "err_l1_q75",
    "err_l2_median",
    "err_l2_q25",
    "err_l2_q75",
    "err_linf_median",
    "err_linf_q25",
    "err_linf_q75",
    "epsilon_n_median",
    "epsilon_n_q25",
    "epsilon_n_q75",
    "kappa_median",
    "re_median",
    "viol_a_frac",
    "viol_b_frac",
    "viol_c_frac",
    "viol_d_frac",
];

/// Median and quartiles, NaN entries dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

impl Quartiles {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
        v.sort_by(f64::total_cmp);
        Self {
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    /// Replicates that failed with an error; excluded from every statistic.
    pub errors: usize,
    pub feas_gamma_frac: f64,
    pub feas_6gamma_frac: f64,
    pub err_l1: Quartiles,
    pub err_l2: Quartiles,
    pub err_linf: Quartiles,
    pub epsilon_n: Quartiles,
    pub kappa_median: f64,
    pub re_median: f64,
    /// Violation fractions of bounds (a)–(d) among records feasible at `γ_n`.
    pub violations: [f64; 4],
}

pub fn summarize(config: &ExperimentConfig, records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    config
        .n_grid
        .iter()
        .map(|&n| {
            let all: Vec<ReplicateRecord> = records.iter().filter(|r| r.n == n).cloned().collect();
            let ok: Vec<&ReplicateRecord> = all.iter().filter(|r| !r.failed()).collect();
            let frac = |pred: &dyn Fn(&ReplicateRecord) -> bool| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|r| pred(r)).count() as f64 / ok.len() as f64
                }
            };
            let q = |f: &dyn Fn(&ReplicateRecord) -> f64| Quartiles::of(ok.iter().map(|r| f(r)));
            let violations = match verify_bounds(&all, &bound_constants(config, n)) {
                Ok(report) => std::array::from_fn(|k| report.bounds[k].violation_fraction),
                Err(_) => [f64::NAN; 4],
            };
            SummaryRow {
                n,
                p: config.p(n),
                replicates: all.len(),
                errors: all.len() - ok.len(),
                feas_gamma_frac: frac(&|r| r.feas_gamma),
                feas_6gamma_frac: frac(&|r| r.feas_6gamma),
                err_l1: q(&|r| r.err_l1),
                err_l2: q(&|r| r.err_l2),
                err_linf: q(&|r| r.err_linf),
                epsilon_n: q(&|r| r.epsilon_n),
                kappa_median: q(&|r| r.kappa).median,
                re_median: q(&|r| r.re).median,
                violations,
            }
        })
        .collect()
}

impl SummaryRow {
    fn to_row(&self) -> Vec<String> {
        let mut row = vec![
            self.n.to_string(),
            self.p.to_string(),
            self.replicates.to_string(),
            self.errors.to_string(),
            self.feas_gamma_frac.to_string(),
            self.feas_6gamma_frac.to_string(),
        ];
        for q in [&self.err_l1, &self.err_l2, &self.err_linf, &self.epsilon_n] {
            row.extend([q.median.to_string(), q.q25.to_string(), q.q75.to_string()]);
        }
        row.push(self.kappa_median.to_string());
        row.push(self.re_median.to_string());
        row.extend(self.violations.iter().map(|v| v.to_string()));
        row
    }

    fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != SUMMARY_COLUMNS.len() {
            return Err(BenchError::Invalid(format!(
                "summary row has {} fields, expected {}",
                row.len(),
                SUMMARY_COLUMNS.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            row[i].trim().parse().map_err(|_| {
                BenchError::Invalid(format!("cannot parse {} = `{}`", SUMMARY_COLUMNS[i], &row[i]))
            })
        };
        let int = |i: usize| num(i).map(|v| v as usize);
        let quart = |i: usize| -> Result<Quartiles> {
            Ok(Quartiles {
                median: num(i)?,
                q25: num(i + 1)?,
                q75: num(i + 2)?,
            })
        };
        Ok(Self {
            n: int(0)?,
            p: int(1)?,
            replicates: int(2)?,
            errors: int(3)?,
            feas_gamma_frac: num(4)?,
            feas_6gamma_frac: num(5)?,
            err_l1: quart(6)?,
            err_l2: quart(9)?,
            err_linf: quart(12)?,
            epsilon_n: quart(15)?,
            kappa_median: num(18)?,
            re_median: num(19)?,
            violations: [num(20)?, num(21)?, num(22)?, num(23)?],
        })
    }
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(SUMMARY_COLUMNS)?;
    for row in rows {
        writer.write_record(row.to_row())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().ne(SUMMARY_COLUMNS.iter().copied()) {
        return Err(BenchError::Invalid("unexpected summary header".into()));
    }
    reader.records().map(|row| SummaryRow::from_row(&row?)).collect()
}
