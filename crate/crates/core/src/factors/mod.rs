//! Cone-restricted factors of a positive semidefinite matrix.
//!
//! For a support `T` of size `S` and the cone
//! `C_T = {h : ‖h_{Tᶜ}‖₁ ≤ ‖h_T‖₁}` this module computes
//!
//! * the compatibility factor `κ = inf √S (hᵀJh)^{1/2} / ‖h_T‖₁`,
//! * the restricted eigenvalue `RE = inf (hᵀJh)^{1/2} / ‖h‖₂`,
//! * the weak cone invertibility factors
//!   `F_q = inf S^{1/q} hᵀJh / (‖h_T‖₁ ‖h‖_q)` for finite `q`,
//!   and `F_∞ = inf (hᵀJh)^{1/2} / ‖h‖_∞`,
//!
//! all infima over `h ∈ C_T \ {0}`. Each objective is invariant under
//! positive scaling of `h`, so the search runs on the slice `‖h_T‖₁ = 1`.
//! Finite-`q` factors are linear in `J` while the others scale with `√J`;
//! this is the form the `ℓ_q` error bound consumes, since it compares
//! `hᵀJh` with `‖h_T‖₁‖h‖_q` directly.
//! Fixing the signs of `h_T` splits the cone into convex pieces, which makes
//! `κ²` and `F_∞²` minima of convex quadratic programs; those are solved per
//! sign pattern and reported as [`Method::ExactEnumeration`]. `RE` and
//! `F_q` for finite `q` remain ratios of quadratics and norms and are
//! minimized by projected descent from several starts.
//!
//! Supports larger than [`FactorOptions::exact_max_support`] make the
//! pattern enumeration impractical; there the factors fall back to the best
//! of many random cone directions, which can only over-estimate an infimum.

mod region;
mod search;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ObservedPath;
use crate::quasi_lik::j_matrix;
use crate::rng::{stream_rng, Stream};
use crate::stats::quantile;
use region::Region;
use search::{minimize_quadratic, minimize_ratio, quad};

/// Slack used by [`FactorReport::ordering_check`].
pub const ORDERING_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    ExactEnumeration,
    ProjectedDescent,
    /// Best of random cone directions: an upper bound on the infimum.
    RandomLowerBound,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ExactEnumeration => "exact_enumeration",
            Method::ProjectedDescent => "projected_descent",
            Method::RandomLowerBound => "random_lower_bound",
        })
    }
}

/// Which factor an objective refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    Compatibility,
    RestrictedEigenvalue,
    /// `F_q` for `q ∈ [1, ∞]`.
    ConeInvertibility(f64),
}

/// A factor value with the direction that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorValue {
    /// Always equal to the objective evaluated at `certificate`.
    pub value: f64,
    pub method: Method,
    pub certificate: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorOptions {
    /// Largest `|T|` for which sign patterns are enumerated.
    pub exact_max_support: usize,
    /// Random starts per sign pattern for the descent-based factors.
    pub restarts: usize,
    pub max_iters: usize,
    pub step_tol: f64,
    /// Iteration cap for the convex subproblems.
    pub qp_max_iters: usize,
    pub qp_tol: f64,
    pub random_samples: usize,
    pub seed: u64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self {
            exact_max_support: 12,
            restarts: 8,
            max_iters: 2000,
            step_tol: 1e-10,
            qp_max_iters: 5000,
            qp_tol: 1e-13,
            random_samples: 100_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorReport {
    pub support: Vec<usize>,
    pub kappa: FactorValue,
    pub re: FactorValue,
    /// `(q, F_q)` in the order requested; `q = f64::INFINITY` for `F_∞`.
    pub f_q: Vec<(f64, FactorValue)>,
}

impl FactorReport {
    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn f(&self, q: f64) -> Option<&FactorValue> {
        self.f_q.iter().find(|(qq, _)| *qq == q).map(|(_, v)| v)
    }

    /// The weakest method used by any factor in the report.
    pub fn method(&self) -> Method {
        self.f_q
            .iter()
            .map(|(_, v)| v.method)
            .chain([self.kappa.method, self.re.method])
            .max()
            .expect("report holds at least two factors")
    }

    /// Checks `κ ≤ 2√S·RE` and `κ ≤ F_q` for every stored `q`, each with
    /// slack [`ORDERING_SLACK`], and describes every violation.
    ///
    /// The first inequality holds for every matrix. The second does not:
    /// already for `J = I` and `T = {0}` in two dimensions, `F_1 = 2√2 − 2`
    /// while `κ = 1`. Violations of it are reported, not treated as
    /// numerical failures.
    pub fn ordering_check(&self) -> Vec<String> {
        let s = self.sparsity() as f64;
        let k = self.kappa.value;
        let mut out = Vec::new();
        let re_bound = 2.0 * s.sqrt() * self.re.value;
        if k > re_bound + ORDERING_SLACK {
            out.push(format!("kappa = {k} exceeds 2*sqrt(S)*RE = {re_bound}"));
        }
        for (q, f) in &self.f_q {
            if k > f.value + ORDERING_SLACK {
                out.push(format!("kappa = {k} exceeds F_{q} = {}", f.value));
            }
        }
        out
    }
}

/// Objective of `factor` at a nonzero direction `h`.
pub fn objective(factor: Factor, j: &DMatrix<f64>, support: &[usize], h: &DVector<f64>) -> f64 {
    let s = support.len() as f64;
    let root = quad(j, h).sqrt();
    match factor {
        Factor::Compatibility => {
            let on: f64 = support.iter().map(|&i| h[i].abs()).sum();
            s.sqrt() * root / on
        }
        Factor::RestrictedEigenvalue => root / h.norm(),
        Factor::ConeInvertibility(q) if q.is_infinite() => root / h.amax(),
        Factor::ConeInvertibility(q) => {
            let on: f64 = support.iter().map(|&i| h[i].abs()).sum();
            let norm = h.iter().map(|v| v.abs().powf(q)).sum::<f64>().powf(1.0 / q);
            s.powf(1.0 / q) * quad(j, h) / (on * norm)
        }
    }
}

/// `‖h_{Tᶜ}‖₁ ≤ ‖h_T‖₁ (1 + tol)`.
pub fn in_cone(support: &[usize], h: &DVector<f64>, tol: f64) -> bool {
    let on: f64 = support.iter().map(|&i| h[i].abs()).sum();
    let off = h.lp_norm(1) - on;
    on > 0.0 && off <= on * (1.0 + tol)
}

pub fn compatibility(j: &DMatrix<f64>, support: &[usize]) -> Result<FactorValue> {
    let problem = Problem::new(j, support, &FactorOptions::default())?;
    if problem.exhaustive() {
        Ok(problem.kappa())
    } else {
        Ok(problem.random_report(&[]).kappa)
    }
}

pub fn restricted_eigenvalue(j: &DMatrix<f64>, support: &[usize]) -> Result<FactorValue> {
    let problem = Problem::new(j, support, &FactorOptions::default())?;
    if !problem.exhaustive() {
        return Ok(problem.random_report(&[]).re);
    }
    let seeds = [problem.kappa().certificate];
    Ok(problem.descent(2.0, Factor::RestrictedEigenvalue, &seeds))
}

/// `F_q` for `q ∈ [1, ∞]`; pass `f64::INFINITY` for `F_∞`.
pub fn cone_invertibility(j: &DMatrix<f64>, support: &[usize], q: f64) -> Result<FactorValue> {
    check_q(q)?;
    let problem = Problem::new(j, support, &FactorOptions::default())?;
    if !problem.exhaustive() {
        let mut report = problem.random_report(&[q]);
        return Ok(report.f_q.remove(0).1);
    }
    if q.is_infinite() {
        Ok(problem.f_inf())
    } else {
        let seeds = [problem.kappa().certificate];
        Ok(problem.descent(q, Factor::ConeInvertibility(q), &seeds))
    }
}

/// All three factors with default options; `qs` lists the requested `F_q`.
pub fn factor_report(j: &DMatrix<f64>, support: &[usize], qs: &[f64]) -> Result<FactorReport> {
    factor_report_with(j, support, qs, &FactorOptions::default())
}

pub fn factor_report_with(
    j: &DMatrix<f64>,
    support: &[usize],
    qs: &[f64],
    opts: &FactorOptions,
) -> Result<FactorReport> {
    for &q in qs {
        check_q(q)?;
    }
    let problem = Problem::new(j, support, opts)?;
    if !problem.exhaustive() {
        return Ok(problem.random_report(qs));
    }
    let kappa = problem.kappa();
    let f_inf = qs
        .iter()
        .any(|q| q.is_infinite())
        .then(|| problem.f_inf());
    let mut seeds = vec![kappa.certificate.clone()];
    if let Some(f) = &f_inf {
        seeds.push(f.certificate.clone());
    }
    let re = problem.descent(2.0, Factor::RestrictedEigenvalue, &seeds);
    seeds.push(re.certificate.clone());
    let f_q = qs
        .iter()
        .map(|&q| {
            let value = if q.is_infinite() {
                f_inf.clone().expect("computed above")
            } else {
                problem.descent(q, Factor::ConeInvertibility(q), &seeds)
            };
            (q, value)
        })
        .collect();
    Ok(FactorReport {
        support: problem.support.clone(),
        kappa,
        re,
        f_q,
    })
}

fn check_q(q: f64) -> Result<()> {
    if q.is_nan() || q < 1.0 {
        return Err(Error::InvalidArgument(format!("q must lie in [1, ∞], got {q}")));
    }
    Ok(())
}

struct Problem<'a> {
    j: &'a DMatrix<f64>,
    support: Vec<usize>,
    p: usize,
    lipschitz: f64,
    opts: FactorOptions,
}

impl<'a> Problem<'a> {
    fn new(j: &'a DMatrix<f64>, support: &[usize], opts: &FactorOptions) -> Result<Self> {
        let (p, cols) = j.shape();
        if p != cols {
            return Err(Error::InvalidArgument(format!("matrix must be square, got {p}×{cols}")));
        }
        if p == 0 {
            return Err(Error::InvalidArgument("matrix is empty".into()));
        }
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("factor matrix"));
        }
        let scale = 1.0 + j.amax();
        if (j - j.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidArgument("matrix is not symmetric".into()));
        }
        if support.is_empty() {
            return Err(Error::InvalidArgument("support set is empty".into()));
        }
        let mut sorted = support.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != support.len() {
            return Err(Error::InvalidArgument("support set has repeated indices".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&i| i >= p) {
            return Err(Error::InvalidArgument(format!("support index {bad} out of range for p = {p}")));
        }
        let eig = j.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = eig.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        if lo < -1e-8 * scale {
            return Err(Error::InvalidArgument(format!(
                "matrix is not positive semidefinite (smallest eigenvalue {lo})"
            )));
        }
        Ok(Self {
            j,
            support: sorted,
            p,
            lipschitz: 2.0 * hi.max(0.0),
            opts: opts.clone(),
        })
    }

    fn s(&self) -> usize {
        self.support.len()
    }

    fn exhaustive(&self) -> bool {
        self.s() <= self.opts.exact_max_support
    }

    /// Sign vectors over all coordinates (`+1` off the support), one per
    /// pattern on the support. With `anchor = None` the first support sign
    /// is fixed to `+1` by the symmetry `h → -h`.
    fn patterns(&self, anchor: Option<usize>) -> Vec<DVector<f64>> {
        let s = self.s();
        let free_first = anchor.is_some();
        let count = if free_first { 1usize << s } else { 1usize << (s - 1) };
        (0..count)
            .filter_map(|mask| {
                let mut signs = DVector::from_element(self.p, 1.0);
                for (pos, &i) in self.support.iter().enumerate() {
                    let flip = if free_first {
                        (mask >> pos) & 1 == 1
                    } else {
                        pos > 0 && (mask >> (pos - 1)) & 1 == 1
                    };
                    if flip {
                        signs[i] = -1.0;
                    }
                }
                if let Some(a) = anchor {
                    if signs[a] < 0.0 {
                        return None;
                    }
                }
                Some(signs)
            })
            .collect()
    }

    fn flipped(&self, signs: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |r, c| signs[r] * signs[c] * self.j[(r, c)])
    }

    fn slice_center(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.p);
        for &i in &self.support {
            y[i] = 1.0 / self.s() as f64;
        }
        y
    }

    fn kappa(&self) -> FactorValue {
        let region = Region::slice(&self.support, self.p);
        let mut best: Option<(f64, DVector<f64>)> = None;
        for signs in self.patterns(None) {
            let m = self.flipped(&signs);
            let y = minimize_quadratic(
                &m,
                &region,
                self.slice_center(),
                self.lipschitz,
                self.opts.qp_max_iters,
                self.opts.qp_tol,
            );
            let h = y.component_mul(&signs);
            let v = objective(Factor::Compatibility, self.j, &self.support, &h);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, h));
            }
        }
        let (value, certificate) = best.expect("at least one sign pattern");
        FactorValue {
            value,
            method: Method::ExactEnumeration,
            certificate,
        }
    }

    /// `F_∞² = min_j min { hᵀJh : h ∈ C_T, h_j = 1 }`.
    fn f_inf(&self) -> FactorValue {
        let factor = Factor::ConeInvertibility(f64::INFINITY);
        let mut best: Option<(f64, DVector<f64>)> = None;
        for anchor in 0..self.p {
            let region = Region::anchored(&self.support, self.p, anchor);
            for signs in self.patterns(Some(anchor)) {
                let m = self.flipped(&signs);
                let y = minimize_quadratic(
                    &m,
                    &region,
                    DVector::zeros(self.p),
                    self.lipschitz,
                    self.opts.qp_max_iters,
                    self.opts.qp_tol,
                );
                let h = y.component_mul(&signs);
                let v = objective(factor, self.j, &self.support, &h);
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, h));
                }
            }
        }
        let (value, certificate) = best.expect("at least one anchor");
        FactorValue {
            value,
            method: Method::ExactEnumeration,
            certificate,
        }
    }

    /// Minimizes the factor's objective per sign pattern by projected descent from
    /// the slice center, the support vertices, the given seed directions and
    /// random points.
    fn descent(&self, q: f64, factor: Factor, seeds: &[DVector<f64>]) -> FactorValue {
        let region = Region::slice(&self.support, self.p);
        // On the slice, RE² is yᵀJy/‖y‖₂² and F_q/S^{1/q} is yᵀJy/‖y‖_q.
        let power = if factor == Factor::RestrictedEigenvalue { 2 } else { 1 };
        let mut rng = stream_rng(self.opts.seed, Stream::FactorSearch);
        let first = self.support[0];
        let mut best: Option<(f64, DVector<f64>)> = None;
        for signs in self.patterns(None) {
            let m = self.flipped(&signs);
            let mut starts = vec![self.slice_center()];
            for &i in &self.support {
                let mut e = DVector::zeros(self.p);
                e[i] = 1.0;
                starts.push(e);
            }
            for seed in seeds {
                // Bring the seed to the orientation with a positive first
                // support coordinate and keep it if it lies on this pattern.
                let oriented = if seed[first] < 0.0 { -seed } else { seed.clone() };
                let on = self.support.iter().all(|&i| oriented[i] * signs[i] >= 0.0);
                let mass: f64 = self.support.iter().map(|&i| oriented[i].abs()).sum();
                if on && mass > 0.0 {
                    starts.push(oriented.component_mul(&signs) / mass);
                }
            }
            for _ in 0..self.opts.restarts {
                starts.push(self.random_slice_point(&mut rng));
            }
            for start in starts {
                let (y, f) =
                    minimize_ratio(&m, &region, q, power, start, self.opts.max_iters, self.opts.step_tol);
                if best.as_ref().is_none_or(|(b, _)| f < *b) {
                    best = Some((f, y.component_mul(&signs)));
                }
            }
        }
        let (_, certificate) = best.expect("at least one start");
        FactorValue {
            value: objective(factor, self.j, &self.support, &certificate),
            method: Method::ProjectedDescent,
            certificate,
        }
    }

    /// A random point of the slice in flipped coordinates.
    fn random_slice_point(&self, rng: &mut impl Rng) -> DVector<f64> {
        let mut y = DVector::zeros(self.p);
        let mut total = 0.0;
        for &i in &self.support {
            let e: f64 = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
            y[i] = e;
            total += e;
        }
        for &i in &self.support {
            y[i] /= total;
        }
        self.fill_off_support(&mut y, rng);
        y
    }

    /// Writes a random `u` with `‖u‖₁ ≤ 1` into the off-support coordinates,
    /// on the boundary `‖u‖₁ = 1` half of the time.
    fn fill_off_support(&self, y: &mut DVector<f64>, rng: &mut impl Rng) {
        let off = region::complement(&self.support, self.p);
        if off.is_empty() {
            return;
        }
        let raw: Vec<f64> = off.iter().map(|_| rng.sample(StandardNormal)).collect();
        let l1: f64 = raw.iter().map(|v: &f64| v.abs()).sum();
        let radius = if rng.random::<bool>() { 1.0 } else { rng.random::<f64>() };
        for (&i, v) in off.iter().zip(raw) {
            y[i] = if l1 > 0.0 { radius * v / l1 } else { 0.0 };
        }
    }

    fn random_report(&self, qs: &[f64]) -> FactorReport {
        let mut rng = stream_rng(self.opts.seed, Stream::FactorSearch);
        let factors: Vec<Factor> = [Factor::Compatibility, Factor::RestrictedEigenvalue]
            .into_iter()
            .chain(qs.iter().map(|&q| Factor::ConeInvertibility(q)))
            .collect();
        let mut best: Vec<Option<(f64, DVector<f64>)>> = vec![None; factors.len()];
        for _ in 0..self.opts.random_samples.max(1) {
            let mut h = DVector::zeros(self.p);
            let raw: Vec<f64> = self.support.iter().map(|_| rng.sample(StandardNormal)).collect();
            let l1: f64 = raw.iter().map(|v: &f64| v.abs()).sum();
            for (&i, v) in self.support.iter().zip(raw) {
                h[i] = v / l1;
            }
            self.fill_off_support(&mut h, &mut rng);
            for (slot, &factor) in best.iter_mut().zip(&factors) {
                let v = objective(factor, self.j, &self.support, &h);
                if slot.as_ref().is_none_or(|(b, _)| v < *b) {
                    *slot = Some((v, h.clone()));
                }
            }
        }
        let mut values = best.into_iter().map(|b| {
            let (value, certificate) = b.expect("at least one sample");
            FactorValue {
                value,
                method: Method::RandomLowerBound,
                certificate,
            }
        });
        let kappa = values.next().expect("kappa slot");
        let re = values.next().expect("RE slot");
        FactorReport {
            support: self.support.clone(),
            kappa,
            re,
            f_q: qs.iter().copied().zip(values).collect(),
        }
    }
}

/// Empirical distribution of `κ(T; J_n)` over replicate paths.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionSummary {
    /// One value per path, in input order.
    pub kappas: Vec<f64>,
    /// `(probability, quantile)` at 5%, 25%, 50%, 75% and 95%.
    pub quantiles: Vec<(f64, f64)>,
    pub delta: f64,
    /// Fraction of replicates with `κ > δ`.
    pub fraction_above: f64,
}

pub const MIN_ASSUMPTION_REPLICATES: usize = 20;

/// Computes `κ(T; J_n)` on every path to judge whether a design keeps the
/// compatibility factor away from zero.
pub fn assumption_check(paths: &[ObservedPath], support: &[usize], delta: f64) -> Result<AssumptionSummary> {
    if paths.len() < MIN_ASSUMPTION_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_ASSUMPTION_REPLICATES} replicate paths, got {}",
            paths.len()
        )));
    }
    let kappas = paths
        .iter()
        .map(|path| compatibility(&j_matrix(path)?, support).map(|f| f.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = kappas.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
        .into_iter()
        .map(|pr| (pr, quantile(&sorted, pr)))
        .collect();
    let fraction_above = kappas.iter().filter(|k| **k > delta).count() as f64 / kappas.len() as f64;
    Ok(AssumptionSummary {
        kappas,
        quantiles,
        delta,
        fraction_above,
    })
}
