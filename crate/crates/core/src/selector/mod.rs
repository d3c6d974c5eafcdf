//! The Dantzig selector `θ̂ = argmin { ‖θ‖₁ : ‖ψ_n(0; θ)‖_∞ ≤ γ }`.
//!
//! The constraint set is not convex, so [`estimate`] linearizes the score
//! around the current iterate (`∂ψ_n/∂θᵀ = -V_n`) and solves the resulting
//! ℓ₁ linear program exactly, repeating until the iterates settle. The first
//! iterate comes from a linear Dantzig regression of log squared increments
//! on the covariates ([`log_regression_init`]). Feasibility of the returned
//! point is always re-checked against the nonlinear score.

mod simplex;

use std::fmt;

use nalgebra::{DMatrix, DVector};

pub use simplex::{Constraint, LinearProgram, LpOutcome, Relation};

use crate::error::{ensure_len, Error, Result};
use crate::model::{Drift, ObservedPath};
use crate::quasi_lik::{score, score_and_hessian};

/// `E[log χ²₁] = digamma(1/2) + log 2`.
pub const LOG_CHI2_MEAN: f64 = -1.2703628454614782;

/// Relative slack on the score constraint when checking feasibility.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

/// The tuning rule `γ_n = K₀ Δ_n^{1/2 - α}` together with the growth
/// exponent `ζ` of `log(1 + p_n) = O(n^ζ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningRule {
    pub k0: f64,
    pub alpha: f64,
    pub zeta: f64,
}

impl TuningRule {
    /// Requires `K₀ > 0` and `0 < ζ < 2α < 1`.
    pub fn new(k0: f64, alpha: f64, zeta: f64) -> Result<Self> {
        let rule = Self { k0, alpha, zeta };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k0.is_finite() && self.k0 > 0.0) {
            return Err(Error::InvalidArgument(format!("K0 must be positive, got {}", self.k0)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie strictly between 0 and 1/2, got {}",
                self.alpha
            )));
        }
        if !(self.zeta > 0.0 && self.zeta < 2.0 * self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "zeta must satisfy 0 < zeta < 2*alpha = {}, got {}",
                2.0 * self.alpha,
                self.zeta
            )));
        }
        Ok(())
    }

    pub fn gamma_n(&self, n: usize) -> Result<f64> {
        gamma_n(self, n)
    }
}

/// `γ_n = K₀ (1/n)^{1/2 - α}`.
pub fn gamma_n(rule: &TuningRule, n: usize) -> Result<f64> {
    rule.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    Ok(rule.k0 * (1.0 / n as f64).powf(0.5 - rule.alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub status: LpStatus,
}

/// Minimizes `‖θ‖₁` subject to `|c_i + (Aθ)_i| ≤ r_i` for every row `i`.
///
/// Solved exactly by the simplex method on the split `θ = θ⁺ - θ⁻`. When
/// several optima exist the returned vertex is a deterministic function of
/// the input, with lower coordinates entering the support first.
pub fn lp_min_l1(a: &DMatrix<f64>, c: &DVector<f64>, r: &DVector<f64>) -> Result<LpSolution> {
    let (m, p) = a.shape();
    ensure_len("constraint centers", m, c.len())?;
    ensure_len("constraint radii", m, r.len())?;
    if a.iter().chain(c.iter()).chain(r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ℓ₁ program data"));
    }
    if r.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("constraint radii must be non-negative".into()));
    }

    let mut lp = LinearProgram::new(vec![1.0; 2 * p]);
    for i in 0..m {
        let row = a.row(i);
        let scale = row
            .iter()
            .chain([c[i], r[i]].iter())
            .fold(0.0_f64, |s, v| s.max(v.abs()));
        let scale = if scale > 0.0 { 1.0 / scale } else { 1.0 };
        let coeffs: Vec<f64> = row
            .iter()
            .map(|v| v * scale)
            .chain(row.iter().map(|v| -v * scale))
            .collect();
        lp.push(coeffs.clone(), Relation::Le, (r[i] - c[i]) * scale);
        lp.push(coeffs, Relation::Ge, (-r[i] - c[i]) * scale);
    }
    match lp.solve()? {
        LpOutcome::Optimal { x, .. } => {
            let theta = DVector::from_fn(p, |j, _| x[j] - x[p + j]);
            let objective = theta.lp_norm(1);
            Ok(LpSolution {
                theta,
                objective,
                status: LpStatus::Optimal,
            })
        }
        LpOutcome::Infeasible => Ok(LpSolution {
            theta: DVector::zeros(p),
            objective: f64::NAN,
            status: LpStatus::Infeasible,
        }),
        LpOutcome::Unbounded => unreachable!("an ℓ₁ objective is bounded below by zero"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    InfeasibleLp,
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::InfeasibleLp => "infeasible_lp",
        })
    }
}

/// One linearization round: `‖θ⁽ᵐ⁺¹⁾‖₁` and `max(0, ‖ψ_n(0; θ⁽ᵐ⁺¹⁾)‖_∞ - γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub objective: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: DVector<f64>,
    pub gamma: f64,
    /// `‖ψ_n(0; θ̂)‖_∞ ≤ γ (1 + 10⁻⁶)`, evaluated on the nonlinear score.
    pub feasible: bool,
    pub iterations: usize,
    pub objective: f64,
    pub solver_status: SolverStatus,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    pub max_rounds: usize,
    pub step_tol: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            max_rounds: 50,
            step_tol: 1e-8,
        }
    }
}

fn score_sup(path: &ObservedPath, theta: &DVector<f64>) -> Result<f64> {
    Ok(score(path, theta, Drift::Zero)?.amax())
}

fn within(sup: f64, gamma: f64) -> bool {
    sup <= gamma * (1.0 + FEASIBILITY_SLACK)
}

/// The Dantzig selector with the default options.
pub fn estimate(path: &ObservedPath, gamma: f64) -> Result<EstimateResult> {
    estimate_with(path, gamma, &EstimateOptions::default())
}

pub fn estimate_with(
    path: &ObservedPath,
    gamma: f64,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    path.validate()?;
    let p = path.p();
    let zero = DVector::zeros(p);

    // Zero is the global minimizer whenever it is feasible.
    let sup0 = score_sup(path, &zero)?;
    if within(sup0, gamma) {
        return Ok(EstimateResult {
            theta_hat: zero,
            gamma,
            feasible: true,
            iterations: 1,
            objective: 0.0,
            solver_status: SolverStatus::Converged,
            trace: vec![TraceEntry {
                objective: 0.0,
                violation: 0.0,
            }],
        });
    }

    let mut theta = log_regression_init(path)?.theta;
    let mut trace = Vec::new();
    let mut best_feasible: Option<DVector<f64>> = None;
    let mut status = SolverStatus::MaxIters;
    let radius = DVector::from_element(p, gamma);

    for _ in 0..opts.max_rounds {
        let (psi, v) = score_and_hessian(path, &theta, Drift::Zero)?;
        let center = &psi + &v * &theta;
        let sol = lp_min_l1(&(-&v), &center, &radius)?;
        if sol.status == LpStatus::Infeasible {
            status = SolverStatus::InfeasibleLp;
            break;
        }
        let next = sol.theta;
        let sup = score_sup(path, &next)?;
        trace.push(TraceEntry {
            objective: sol.objective,
            violation: (sup - gamma).max(0.0),
        });
        if within(sup, gamma)
            && best_feasible
                .as_ref()
                .is_none_or(|b| next.lp_norm(1) < b.lp_norm(1))
        {
            best_feasible = Some(next.clone());
        }
        let step = (&next - &theta).amax();
        theta = next;
        if step < opts.step_tol {
            status = SolverStatus::Converged;
            break;
        }
    }

    if status != SolverStatus::Converged {
        if let Some(best) = best_feasible {
            theta = best;
        }
    }
    let feasible = within(score_sup(path, &theta)?, gamma);
    Ok(EstimateResult {
        objective: theta.lp_norm(1),
        theta_hat: theta,
        gamma,
        feasible,
        iterations: trace.len(),
        solver_status: status,
        trace,
    })
}

/// Exact selector for a single constant covariate `c ≠ 0`.
///
/// With `Q = (1/(nΔ_n)) Σ ΔX_k²` the score is `ψ(θ) = c (Q e^{-2θc} - 1)`,
/// monotone in `θ`, so the feasible set is an interval and the selector is
/// its point nearest zero.
pub fn closed_form_1d(path: &ObservedPath, gamma: f64) -> Result<f64> {
    path.validate()?;
    if path.p() != 1 {
        return Err(Error::InvalidArgument(format!(
            "closed form needs p = 1, got p = {}",
            path.p()
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let c = path.z[(0, 0)];
    if path.z.iter().any(|v| *v != c) {
        return Err(Error::InvalidArgument("covariate is not constant".into()));
    }
    if c == 0.0 {
        return Err(Error::InvalidArgument("covariate is identically zero".into()));
    }
    let q: f64 = path.increments().map(|d| d * d).sum::<f64>() / (path.n as f64 * path.delta());
    if q <= 0.0 {
        return Err(Error::NoSolution("all increments are zero".into()));
    }
    // u = -2θc must satisfy (1 - r)/Q ≤ e^u ≤ (1 + r)/Q with r = γ/|c|.
    let r = gamma / c.abs();
    let u_hi = ((1.0 + r) / q).ln();
    let u_lo = if r < 1.0 { ((1.0 - r) / q).ln() } else { f64::NEG_INFINITY };
    let (a, b) = (-u_lo / (2.0 * c), -u_hi / (2.0 * c));
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    Ok(if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else if lo > 0.0 {
        lo
    } else {
        hi
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStatus {
    Ok,
    /// All covariates vanish; the zero vector is returned.
    DegenerateDesign,
    /// The linear program had no solution; the zero vector is returned.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitResult {
    pub theta: DVector<f64>,
    pub status: InitStatus,
}

/// Linear Dantzig regression of `y_k = log(ΔX_k²/Δ_n) - E[log χ²₁]` on the
/// rows `2 Z_{t_{k-1}}ᵀ`, with radius `2 √(log(1+p)/n) · sd(y)`.
///
/// Under the model `y_k = 2 θᵀZ_{t_{k-1}} + noise` with centered noise, up
/// to the discretization of the volatility within each interval.
pub fn log_regression_init(path: &ObservedPath) -> Result<InitResult> {
    path.validate()?;
    let p = path.p();
    let n = path.n;
    if path.z.columns(0, n).iter().all(|v| *v == 0.0) {
        return Ok(InitResult {
            theta: DVector::zeros(p),
            status: InitStatus::DegenerateDesign,
        });
    }
    let delta = path.delta();
    let y: Vec<f64> = path
        .increments()
        .map(|d| (d * d).max(1e-300).ln() - delta.ln() - LOG_CHI2_MEAN)
        .collect();

    let mut gram = DMatrix::zeros(p, p);
    let mut cross = DVector::zeros(p);
    for (k, yk) in y.iter().enumerate() {
        let row = 2.0 * path.z.column(k);
        gram.ger(1.0, &row, &row, 1.0);
        cross.axpy(*yk, &row, 1.0);
    }
    gram /= n as f64;
    cross /= n as f64;

    let mean = y.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let radius = 2.0 * ((1.0 + p as f64).ln() / n as f64).sqrt() * var.sqrt();
    let sol = lp_min_l1(&(-gram), &cross, &DVector::from_element(p, radius))?;
    Ok(match sol.status {
        LpStatus::Optimal => InitResult {
            theta: sol.theta,
            status: InitStatus::Ok,
        },
        LpStatus::Infeasible => InitResult {
            theta: DVector::zeros(p),
            status: InitStatus::Failed,
        },
    })
}
