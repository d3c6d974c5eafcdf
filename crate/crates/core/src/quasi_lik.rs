//! Gaussian quasi-likelihood of the discretely observed diffusion.
//!
//! With `η_k = θᵀ Z_{t_{k-1}}` and `r_k = ΔX_k - b(X_{t_{k-1}}) Δ_n`,
//!
//! ```text
//! l_n(b; θ) = Σ_k [ -½ log(2π e^{2η_k} Δ_n) - r_k² / (2 e^{2η_k} Δ_n) ]
//! ψ_n(b; θ) = (1/(nΔ_n)) Σ_k Z_{t_{k-1}} (e^{-2η_k} r_k² - Δ_n)
//! V_n(b; θ) = (2/(nΔ_n)) Σ_k Z_{t_{k-1}} Z_{t_{k-1}}ᵀ e^{-2η_k} r_k²
//! J_n       = (2/n)      Σ_k Z_{t_{k-1}} Z_{t_{k-1}}ᵀ
//! ```
//!
//! `ψ_n = l̇_n / n` and `V_n = -l̈_n / n`. All matrix sup-norms in this
//! module are entrywise (`max_{i,j} |A_ij|`), not operator norms.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_len, Error, Result};
use crate::model::{Drift, ObservedPath, SimulationRecord};

fn check(path: &ObservedPath, theta: &DVector<f64>) -> Result<()> {
    path.validate()?;
    ensure_len("parameter", path.p(), theta.len())?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("parameter"));
    }
    Ok(())
}

/// `(η_k, r_k)` for each interval `k = 1..=n`.
fn residuals<'a>(
    path: &'a ObservedPath,
    theta: &'a DVector<f64>,
    drift: Drift,
) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    let delta = path.delta();
    (1..=path.n).map(move |k| {
        let z = path.z.column(k - 1);
        let eta = theta.dot(&z);
        let r = path.x[k] - path.x[k - 1] - drift.eval(path.x[k - 1]) * delta;
        (k - 1, eta, r)
    })
}

/// `l_n(b; θ) = log L_n(b; θ)`.
pub fn log_quasi_likelihood(path: &ObservedPath, theta: &DVector<f64>, drift: Drift) -> Result<f64> {
    check(path, theta)?;
    let delta = path.delta();
    let log_norm = (2.0 * std::f64::consts::PI * delta).ln();
    Ok(residuals(path, theta, drift)
        .map(|(_, eta, r)| -0.5 * log_norm - eta - r * r * (-2.0 * eta).exp() / (2.0 * delta))
        .sum())
}

/// The normalized score `ψ_n(b; θ)`.
pub fn score(path: &ObservedPath, theta: &DVector<f64>, drift: Drift) -> Result<DVector<f64>> {
    check(path, theta)?;
    let delta = path.delta();
    let mut psi = DVector::zeros(path.p());
    for (col, eta, r) in residuals(path, theta, drift) {
        let w = (-2.0 * eta).exp() * r * r - delta;
        psi.axpy(w, &path.z.column(col), 1.0);
    }
    psi /= path.n as f64 * delta;
    Ok(psi)
}

/// `V_n(b; θ) = -l̈_n(b; θ) / n`, symmetric positive semidefinite.
pub fn hessian(path: &ObservedPath, theta: &DVector<f64>, drift: Drift) -> Result<DMatrix<f64>> {
    Ok(score_and_hessian(path, theta, drift)?.1)
}

/// `ψ_n` and `V_n` in one pass over the data.
pub fn score_and_hessian(
    path: &ObservedPath,
    theta: &DVector<f64>,
    drift: Drift,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check(path, theta)?;
    let p = path.p();
    let delta = path.delta();
    let mut psi = DVector::zeros(p);
    let mut v = DMatrix::zeros(p, p);
    for (col, eta, r) in residuals(path, theta, drift) {
        let z = path.z.column(col);
        let w = (-2.0 * eta).exp() * r * r;
        psi.axpy(w - delta, &z, 1.0);
        v.syger(w, &z, &z, 1.0);
    }
    v.fill_upper_triangle_with_lower_triangle();
    let scale = path.n as f64 * delta;
    psi /= scale;
    v *= 2.0 / scale;
    Ok((psi, v))
}

/// The surrogate `J_n = (2/n) Σ_k Z_{t_{k-1}} Z_{t_{k-1}}ᵀ`.
pub fn j_matrix(path: &ObservedPath) -> Result<DMatrix<f64>> {
    path.validate()?;
    let p = path.p();
    let mut j = DMatrix::zeros(p, p);
    for k in 0..path.n {
        let z = path.z.column(k);
        j.syger(1.0, &z, &z, 1.0);
    }
    j.fill_upper_triangle_with_lower_triangle();
    j *= 2.0 / path.n as f64;
    Ok(j)
}

/// Entrywise sup-norm `max_{i,j} |A_ij|`.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `ε_n = ‖V_n(0; θ₀) - J_n‖_∞` (entrywise).
pub fn epsilon_n(path: &ObservedPath, theta0: &DVector<f64>) -> Result<f64> {
    let v = hessian(path, theta0, Drift::Zero)?;
    let j = j_matrix(path)?;
    Ok(max_abs(&(v - j)))
}

/// Score, Hessian and surrogate evaluated at one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub psi: DVector<f64>,
    pub v_matrix: DMatrix<f64>,
    pub j_matrix: DMatrix<f64>,
    /// `‖v_matrix - j_matrix‖_∞`; this is `ε_n` when the report is taken
    /// at θ₀ with zero drift.
    pub epsilon_n: f64,
    pub theta_eval: DVector<f64>,
    pub drift: Drift,
}

pub fn score_report(path: &ObservedPath, theta: &DVector<f64>, drift: Drift) -> Result<ScoreReport> {
    let (psi, v_matrix) = score_and_hessian(path, theta, drift)?;
    let j_matrix = j_matrix(path)?;
    let epsilon_n = max_abs(&(&v_matrix - &j_matrix));
    Ok(ScoreReport {
        psi,
        v_matrix,
        j_matrix,
        epsilon_n,
        theta_eval: theta.clone(),
        drift,
    })
}

/// The terms of `ψ_n(b; θ₀) = A + B + C` and `C = D + E`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDecomposition {
    /// Squared drift-error term.
    pub a: DVector<f64>,
    /// Cross term between drift error and the stochastic integral.
    pub b: DVector<f64>,
    /// Centered squared stochastic integral.
    pub c: DVector<f64>,
    /// Volatility-variation part of `c`.
    pub d: DVector<f64>,
    /// Pure Brownian part of `c`.
    pub e: DVector<f64>,
}

/// Decomposes the score at the simulation's θ₀ under `drift`.
///
/// The integrals `∫ (b(X_s) - b(X_{t_{k-1}})) ds` and
/// `∫ exp(θ₀ᵀ Z_s) dW_s` over each observation interval are replaced by
/// left-point sums over the simulator's substeps, using the exact
/// Brownian increments it drew. The path itself was generated by the same
/// left-point scheme, so the identities hold up to rounding.
pub fn score_decomposition(record: &SimulationRecord, drift: Drift) -> Result<ScoreDecomposition> {
    let fine = record.fine.as_ref().ok_or(Error::MissingFineRecord)?;
    let obs = &record.observed;
    let cov = &record.covariates;
    let theta0 = &record.spec.theta0;
    let m = cov.substeps;
    let p = obs.p();
    ensure_len("parameter", p, theta0.len())?;
    ensure_len("fine increments", obs.n * m, fine.dw.len())?;

    let n = obs.n;
    let delta = obs.delta();
    let dt = delta / m as f64;
    let support: Vec<usize> = crate::model::support_of(theta0);

    let mut a = DVector::zeros(p);
    let mut b = DVector::zeros(p);
    let mut c = DVector::zeros(p);
    let mut d = DVector::zeros(p);
    let mut e = DVector::zeros(p);
    for k in 1..=n {
        let start = (k - 1) * m;
        let x_left = fine.x[start];
        let b_left = drift.eval(x_left);
        let mut drift_err = 0.0;
        let mut stoch = 0.0;
        let mut dw_sum = 0.0;
        for j in start..start + m {
            let eta: f64 = support.iter().map(|&i| theta0[i] * cov.values[(i, j)]).sum();
            drift_err += (drift.eval(fine.x[j]) - b_left) * dt;
            stoch += eta.exp() * fine.dw[j];
            dw_sum += fine.dw[j];
        }
        let z = obs.z.column(k - 1);
        let weight = (-2.0 * theta0.dot(&z)).exp();
        a.axpy(weight * drift_err * drift_err, &z, 1.0);
        b.axpy(2.0 * weight * drift_err * stoch, &z, 1.0);
        c.axpy(weight * stoch * stoch - delta, &z, 1.0);
        d.axpy(weight * stoch * stoch - dw_sum * dw_sum, &z, 1.0);
        e.axpy(dw_sum * dw_sum - delta, &z, 1.0);
    }
    let scale = 1.0 / (n as f64 * delta);
    Ok(ScoreDecomposition {
        a: a * scale,
        b: b * scale,
        c: c * scale,
        d: d * scale,
        e: e * scale,
    })
}

/// `g(x) = (e^{2x} - 1) / x`, extended by `g(0) = 2`.
pub fn g_function(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("g argument"));
    }
    if x.abs() < 1e-6 {
        // 2 + 2x + 4x²/3 + 2x³/3
        Ok(2.0 + x * (2.0 + x * (4.0 / 3.0 + x * (2.0 / 3.0))))
    } else {
        Ok((2.0 * x).exp_m1() / x)
    }
}

/// `ν = min_{|x| ≤ a} g(x)`.
///
/// `g` is increasing, so the minimum sits at `-a`. The monotonicity is
/// checked by the unit tests against [`nu_factor_by_grid`].
pub fn nu_factor(radius: f64) -> Result<f64> {
    if !radius.is_finite() {
        return Err(Error::NonFinite("ν radius"));
    }
    if radius < 0.0 {
        return Err(Error::InvalidArgument(format!("ν radius must be non-negative, got {radius}")));
    }
    g_function(-radius)
}

/// Grid minimum of `g` over `[-a, a]` with `points` evenly spaced nodes.
pub fn nu_factor_by_grid(radius: f64, points: usize) -> Result<f64> {
    if !radius.is_finite() || radius < 0.0 || points < 2 {
        return Err(Error::InvalidArgument("bad grid for ν".into()));
    }
    let mut best = f64::INFINITY;
    for i in 0..points {
        let x = -radius + 2.0 * radius * i as f64 / (points - 1) as f64;
        best = best.min(g_function(x)?);
    }
    Ok(best)
}
