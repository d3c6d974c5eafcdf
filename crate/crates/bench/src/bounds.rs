//! Error bounds evaluated on replicate records.
//!
//! With `ν = g(−2C‖θ₀‖₁)`, `K₂ = 8‖θ₀‖₁/ν`, `K₃ = 4‖θ₀‖₁²` and `K₄ = 4/ν`:
//!
//! * (a) `‖θ̂ − θ₀‖₂² ≤ (K₂γ_n + K₃ε_n) / RE²`
//! * (b) `‖θ̂ − θ₀‖_∞² ≤ (K₂γ_n + K₃ε_n) / F_∞²`
//! * (c) `‖θ̂ − θ₀‖₁ ≤ 4K₄Sγ_n / (κ² − 4Sε_n)` when the denominator is positive
//! * (d) `‖θ̂ − θ₀‖₂ ≤ ξ_{n,2}` with
//!   `ξ_{n,q} = 2S^{1/q}ε_n/F_q · 2K₄Sγ_n/(κ² − 2Sε_n) + 2K₄S^{1/q}γ_n/F_q`
//!
//! Each holds deterministically on the event `‖ψ_n(0;θ₀)‖_∞ ≤ γ_n` once
//! `θ̂` is an exact minimizer, so only records with `feas_gamma` are
//! audited. `K₄ = 4/ν` is read off the chain `hᵀVh ≤ (2/ν)·2γ_n‖h‖₁`.

use sparse_diff::quasi_lik::nu_factor;
use sparse_diff::stats::median;

use crate::error::{BenchError, Result};
use crate::records::ReplicateRecord;

/// Relative tolerance before a negative slack counts as a violation.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    pub s: usize,
    pub theta0_l1: f64,
    pub cov_bound: f64,
}

impl BoundConstants {
    pub fn nu(&self) -> f64 {
        nu_factor(2.0 * self.cov_bound * self.theta0_l1).expect("radius is finite and non-negative")
    }

    pub fn k2(&self) -> f64 {
        8.0 * self.theta0_l1 / self.nu()
    }

    pub fn k3(&self) -> f64 {
        4.0 * self.theta0_l1 * self.theta0_l1
    }

    pub fn k4(&self) -> f64 {
        4.0 / self.nu()
    }

    fn positive(v: f64) -> Option<f64> {
        (v.is_finite() && v > 0.0).then_some(v)
    }

    /// Right-hand side of (a), `None` unless `RE > 0`.
    pub fn bound_a(&self, r: &ReplicateRecord) -> Option<f64> {
        let re = Self::positive(r.re)?;
        Some((self.k2() * r.gamma_n + self.k3() * r.epsilon_n) / (re * re))
    }

    pub fn bound_b(&self, r: &ReplicateRecord) -> Option<f64> {
        let f = Self::positive(r.finf)?;
        Some((self.k2() * r.gamma_n + self.k3() * r.epsilon_n) / (f * f))
    }

    pub fn bound_c(&self, r: &ReplicateRecord) -> Option<f64> {
        let s = self.s as f64;
        let den = Self::positive(r.kappa * r.kappa - 4.0 * s * r.epsilon_n)?;
        Some(4.0 * self.k4() * s * r.gamma_n / den)
    }

    /// `ξ_{n,2}`.
    pub fn bound_d(&self, r: &ReplicateRecord) -> Option<f64> {
        let s = self.s as f64;
        let f2 = Self::positive(r.f2)?;
        let den = Self::positive(r.kappa * r.kappa - 2.0 * s * r.epsilon_n)?;
        let k4 = self.k4();
        Some(
            2.0 * s.sqrt() * r.epsilon_n / f2 * (2.0 * k4 * s * r.gamma_n / den)
                + 2.0 * k4 * s.sqrt() * r.gamma_n / f2,
        )
    }

    /// `(bound, observed)` pairs for (a)–(d); bounds (a) and (b) compare
    /// squared norms.
    pub fn all(&self, r: &ReplicateRecord) -> [(Option<f64>, f64); 4] {
        [
            (self.bound_a(r), r.err_l2 * r.err_l2),
            (self.bound_b(r), r.err_linf * r.err_linf),
            (self.bound_c(r), r.err_l1),
            (self.bound_d(r), r.err_l2),
        ]
    }
}

/// Outcome for one bound over the audited records.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundStats {
    /// Audited records where the bound's denominator is positive.
    pub applicable: usize,
    pub violations: usize,
    /// `violations / applicable`, NaN when nothing is applicable.
    pub violation_fraction: f64,
    pub median_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub records: usize,
    /// Records with `feas_gamma` that did not fail.
    pub audited: usize,
    /// True when no record was audited; the statistics are then empty.
    pub vacuous: bool,
    /// Bounds (a), (b), (c), (d) in order.
    pub bounds: [BoundStats; 4],
}

pub const BOUND_NAMES: [&str; 4] = ["a", "b", "c", "d"];

impl BoundReport {
    pub fn render(&self) -> String {
        let mut out = format!("records {}, audited (feasible at gamma_n) {}", self.records, self.audited);
        if self.vacuous {
            out.push_str(", vacuous\n");
            return out;
        }
        out.push('\n');
        for (name, b) in BOUND_NAMES.iter().zip(&self.bounds) {
            out.push_str(&format!(
                "bound ({name}): applicable {}, violations {}, fraction {}, median slack {}\n",
                b.applicable, b.violations, b.violation_fraction, b.median_slack
            ));
        }
        out
    }
}

pub fn is_violation(bound: f64, observed: f64) -> bool {
    bound - observed < -VIOLATION_TOL * bound.abs().max(observed.abs())
}

/// Audits every record with `feas_gamma` against bounds (a)–(d).
pub fn verify_bounds(records: &[ReplicateRecord], constants: &BoundConstants) -> Result<BoundReport> {
    if records.is_empty() {
        return Err(BenchError::Invalid("no records".into()));
    }
    let audited: Vec<&ReplicateRecord> =
        records.iter().filter(|r| r.feas_gamma && !r.failed()).collect();
    let mut slacks: [Vec<f64>; 4] = Default::default();
    let mut violations = [0usize; 4];
    for r in &audited {
        for (k, (bound, observed)) in constants.all(r).into_iter().enumerate() {
            if let Some(b) = bound {
                slacks[k].push(b - observed);
                if is_violation(b, observed) {
                    violations[k] += 1;
                }
            }
        }
    }
    let bounds = std::array::from_fn(|k| {
        let applicable = slacks[k].len();
        BoundStats {
            applicable,
            violations: violations[k],
            violation_fraction: if applicable == 0 {
                f64::NAN
            } else {
                violations[k] as f64 / applicable as f64
            },
            median_slack: median(&slacks[k]),
        }
    });
    Ok(BoundReport {
        records: records.len(),
        audited: audited.len(),
        vacuous: audited.is_empty(),
        bounds,
    })
}
