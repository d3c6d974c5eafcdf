//! The diffusion model and its simulator.
//!
//! The observed process solves
//!
//! ```text
//! X_t = X_0 + ∫ b(X_s) ds + ∫ exp(θᵀ Z_s) dW_s,   t ∈ [0, 1],
//! ```
//!
//! where `Z` is a bounded `p`-dimensional covariate process. Paths are
//! simulated by Euler–Maruyama on a fine grid with `substeps` steps per
//! observation interval and then subsampled at `t_k = k / n`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{ensure_len, Error, Result};
use crate::rng::{stream_rng, Stream};

/// Default number of Euler substeps per observation interval.
pub const DEFAULT_SUBSTEPS: usize = 50;

/// Nuisance drift `b`. Every variant is globally Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Drift {
    #[default]
    Zero,
    /// `b(x) = -lambda * x`, `lambda >= 0`.
    Linear { lambda: f64 },
    /// `b(x) = a * tanh(x)`.
    Tanh { a: f64 },
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { lambda } => -lambda * x,
            Drift::Tanh { a } => a * x.tanh(),
        }
    }

    /// Global Lipschitz constant of the drift.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Zero => 0.0,
            Drift::Linear { lambda } => lambda,
            Drift::Tanh { a } => a.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Drift::Zero => Ok(()),
            Drift::Linear { lambda } if lambda.is_finite() && lambda >= 0.0 => Ok(()),
            Drift::Tanh { a } if a.is_finite() => Ok(()),
            other => Err(Error::InvalidSpec(format!("invalid drift {other}"))),
        }
    }
}

impl fmt::Display for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "zero"),
            Drift::Linear { lambda } => write!(f, "linear:{lambda}"),
            Drift::Tanh { a } => write!(f, "tanh:{a}"),
        }
    }
}

impl FromStr for Drift {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::InvalidSpec(format!("drift `{s}` needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidSpec(format!("drift `{s}`: {e}")))
        };
        let drift = match kind {
            "zero" => Drift::Zero,
            "linear" => Drift::Linear {
                lambda: number(arg)?,
            },
            "tanh" => Drift::Tanh { a: number(arg)? },
            _ => return Err(Error::InvalidSpec(format!("unknown drift `{s}`"))),
        };
        drift.validate()?;
        Ok(drift)
    }
}

/// How covariate paths are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovariateMode {
    /// `C * tanh(Y)` for independent stationary OU paths `dY = -Y dt + dB`.
    #[default]
    OuTanh,
    /// Each coordinate is a uniform draw on `[-C, C]` held for all `t`.
    Constant,
}

impl fmt::Display for CovariateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateMode::OuTanh => "ou_tanh",
            CovariateMode::Constant => "constant",
        })
    }
}

impl FromStr for CovariateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ou_tanh" => Ok(CovariateMode::OuTanh),
            "constant" => Ok(CovariateMode::Constant),
            other => Err(Error::InvalidSpec(format!("unknown covariate mode `{other}`"))),
        }
    }
}

/// The true model: parameter, drift, covariate law and grid sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Number of observation intervals; `Δ_n = 1/n`.
    pub n: usize,
    /// True parameter θ₀; its length is the ambient dimension `p`.
    pub theta0: DVector<f64>,
    pub drift: Drift,
    /// Uniform bound `C` on the covariates.
    pub cov_bound: f64,
    pub x0: f64,
    /// Euler steps per observation interval.
    pub substeps: usize,
    pub covariate_mode: CovariateMode,
}

impl ModelSpec {
    /// A spec with zero drift, `C = 1`, `X_0 = 0`, OU-tanh covariates and
    /// the default number of substeps.
    pub fn new(n: usize, theta0: DVector<f64>) -> Self {
        Self {
            n,
            theta0,
            drift: Drift::Zero,
            cov_bound: 1.0,
            x0: 0.0,
            substeps: DEFAULT_SUBSTEPS,
            covariate_mode: CovariateMode::OuTanh,
        }
    }

    pub fn with_drift(mut self, drift: Drift) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_cov_bound(mut self, c: f64) -> Self {
        self.cov_bound = c;
        self
    }

    pub fn with_substeps(mut self, m: usize) -> Self {
        self.substeps = m;
        self
    }

    pub fn with_covariate_mode(mut self, mode: CovariateMode) -> Self {
        self.covariate_mode = mode;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn p(&self) -> usize {
        self.theta0.len()
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Indices `i` with `θ₀ⁱ ≠ 0`, ascending.
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.theta0)
    }

    pub fn sparsity(&self) -> usize {
        self.support().len()
    }

    /// Number of points of the fine simulation grid, `n·M + 1`.
    pub fn fine_len(&self) -> usize {
        self.n * self.substeps + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be positive".into()));
        }
        if self.p() == 0 {
            return Err(Error::InvalidSpec("p must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidSpec("substeps must be positive".into()));
        }
        if !(self.cov_bound.is_finite() && self.cov_bound > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "covariate bound must be positive, got {}",
                self.cov_bound
            )));
        }
        if self.theta0.iter().any(|v| !v.is_finite()) || !self.x0.is_finite() {
            return Err(Error::NonFinite("model specification"));
        }
        self.drift.validate()
    }

    /// A 64-bit digest of the canonical text form of the spec.
    pub fn digest(&self) -> u64 {
        let mut text = format!(
            "n={};p={};drift={};C={:e};x0={:e};M={};cov={};theta0=",
            self.n,
            self.p(),
            self.drift,
            self.cov_bound,
            self.x0,
            self.substeps,
            self.covariate_mode
        );
        for v in self.theta0.iter() {
            text.push_str(&format!("{:e},", v));
        }
        let hash = Sha256::digest(text.as_bytes());
        let mut word = [0u8; 8];
        word.copy_from_slice(&hash[..8]);
        u64::from_le_bytes(word)
    }
}

pub(crate) fn support_of(theta: &DVector<f64>) -> Vec<usize> {
    theta
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Covariates on the fine grid: column `k` is `Z` at time `k / (n·M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePath {
    pub n: usize,
    pub substeps: usize,
    /// `p × (n·M + 1)`.
    pub values: DMatrix<f64>,
    /// Seed the path was generated from, if any.
    pub seed: Option<u64>,
}

impl CovariatePath {
    /// Covariates held at `levels` for all times.
    pub fn constant(levels: &[f64], n: usize, substeps: usize) -> Self {
        let len = n * substeps + 1;
        let values = DMatrix::from_fn(levels.len(), len, |i, _| levels[i]);
        Self {
            n,
            substeps,
            values,
            seed: None,
        }
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn fine_len(&self) -> usize {
        self.values.ncols()
    }

    /// Time of fine grid point `k`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / (self.n * self.substeps) as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    /// The covariates at the observation times `t_k = k/n`, `p × (n + 1)`.
    pub fn observed(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p(), self.n + 1, |i, k| {
            self.values[(i, k * self.substeps)]
        })
    }
}

/// Seeds and model digest carried by an observed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PathMeta {
    pub substeps: usize,
    pub covariate_seed: u64,
    pub brownian_seed: u64,
    pub spec_digest: u64,
}

/// `n + 1` equidistant observations of `X` on `[0, 1]` with the covariates
/// at the same times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPath {
    pub n: usize,
    /// `X_{t_k}`, length `n + 1`.
    pub x: Vec<f64>,
    /// `p × (n + 1)`; column `k` is `Z_{t_k}`.
    pub z: DMatrix<f64>,
    pub meta: PathMeta,
}

impl ObservedPath {
    /// Builds a path from raw observations; `n` is `x.len() - 1`.
    pub fn new(x: Vec<f64>, z: DMatrix<f64>) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidArgument(
                "a path needs at least two observations".into(),
            ));
        }
        let path = Self {
            n: x.len() - 1,
            x,
            z,
            meta: PathMeta::default(),
        };
        path.validate()?;
        Ok(path)
    }

    pub fn p(&self) -> usize {
        self.z.nrows()
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Observation time `t_k = k / n`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    /// Increments `X_{t_k} - X_{t_{k-1}}`, `k = 1..=n`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.windows(2).map(|w| w[1] - w[0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("path has no intervals".into()));
        }
        ensure_len("observation vector", self.n + 1, self.x.len())?;
        ensure_len("covariate columns", self.n + 1, self.z.ncols())?;
        if self.z.nrows() == 0 {
            return Err(Error::InvalidArgument("path has no covariates".into()));
        }
        if self.x.iter().any(|v| !v.is_finite()) || self.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("path data"));
        }
        Ok(())
    }
}

/// Fine-grid quantities retained for the score decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct FineRecord {
    /// `X` on the fine grid, length `n·M + 1`.
    pub x: Vec<f64>,
    /// Brownian increments over each fine step, length `n·M`.
    pub dw: Vec<f64>,
}

/// Output of [`simulate_recorded`].
#[derive(Debug, Clone)]
pub struct SimulationRecord {
    pub spec: ModelSpec,
    pub observed: ObservedPath,
    pub covariates: CovariatePath,
    pub fine: Option<FineRecord>,
}

impl SimulationRecord {
    pub fn discard_fine(mut self) -> Self {
        self.fine = None;
        self
    }
}

/// Generates the covariate path for `spec` from `seed`.
pub fn generate_covariates(spec: &ModelSpec, seed: u64) -> Result<CovariatePath> {
    spec.validate()?;
    let p = spec.p();
    let len = spec.fine_len();
    let c = spec.cov_bound;
    let mut rng = stream_rng(seed, Stream::Covariates);
    let mut values = DMatrix::zeros(p, len);
    match spec.covariate_mode {
        CovariateMode::Constant => {
            for i in 0..p {
                let level: f64 = rng.random_range(-c..=c);
                values.row_mut(i).fill(level);
            }
        }
        CovariateMode::OuTanh => {
            // Exact OU transition for mean reversion 1 and unit volatility;
            // the initial value is drawn from the stationary law N(0, 1/2).
            let step = 1.0 / (spec.n * spec.substeps) as f64;
            let decay = (-step).exp();
            let scale = (0.5 * -(-2.0 * step).exp_m1()).sqrt();
            for i in 0..p {
                let mut y = std::f64::consts::FRAC_1_SQRT_2 * rng.sample::<f64, _>(StandardNormal);
                values[(i, 0)] = c * y.tanh();
                for k in 1..len {
                    y = y * decay + scale * rng.sample::<f64, _>(StandardNormal);
                    values[(i, k)] = c * y.tanh();
                }
            }
        }
    }
    Ok(CovariatePath {
        n: spec.n,
        substeps: spec.substeps,
        values,
        seed: Some(seed),
    })
}

/// Simulates the observed path of `spec` driven by the covariates `cov`.
pub fn simulate_path(spec: &ModelSpec, cov: &CovariatePath, seed: u64) -> Result<ObservedPath> {
    Ok(run_euler(spec, cov, seed, false)?.0)
}

/// Like [`simulate_path`], also keeping the fine grid and the Brownian
/// increments needed by [`crate::quasi_lik::score_decomposition`].
pub fn simulate_recorded(
    spec: &ModelSpec,
    cov: &CovariatePath,
    seed: u64,
) -> Result<SimulationRecord> {
    let (observed, fine) = run_euler(spec, cov, seed, true)?;
    Ok(SimulationRecord {
        spec: spec.clone(),
        observed,
        covariates: cov.clone(),
        fine,
    })
}

/// Covariates and path from a single seed (separate streams).
pub fn simulate(spec: &ModelSpec, seed: u64) -> Result<ObservedPath> {
    let cov = generate_covariates(spec, seed)?;
    simulate_path(spec, &cov, seed)
}

fn run_euler(
    spec: &ModelSpec,
    cov: &CovariatePath,
    seed: u64,
    keep_fine: bool,
) -> Result<(ObservedPath, Option<FineRecord>)> {
    spec.validate()?;
    ensure_len("covariate dimension", spec.p(), cov.p())?;
    if cov.n != spec.n || cov.substeps != spec.substeps {
        return Err(Error::InvalidArgument(format!(
            "covariate grid (n={}, M={}) does not match spec (n={}, M={})",
            cov.n, cov.substeps, spec.n, spec.substeps
        )));
    }
    ensure_len("covariate grid", spec.fine_len(), cov.fine_len())?;

    let support = spec.support();
    let m = spec.substeps;
    let steps = spec.n * m;
    let dt = 1.0 / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut rng = stream_rng(seed, Stream::Brownian);

    let mut x_obs = Vec::with_capacity(spec.n + 1);
    let mut fine = keep_fine.then(|| FineRecord {
        x: Vec::with_capacity(steps + 1),
        dw: Vec::with_capacity(steps),
    });

    let mut x = spec.x0;
    x_obs.push(x);
    if let Some(f) = fine.as_mut() {
        f.x.push(x);
    }
    for j in 0..steps {
        let eta: f64 = support
            .iter()
            .map(|&i| spec.theta0[i] * cov.values[(i, j)])
            .sum();
        let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        x = x + spec.drift.eval(x) * dt + eta.exp() * dw;
        if let Some(f) = fine.as_mut() {
            f.x.push(x);
            f.dw.push(dw);
        }
        if (j + 1) % m == 0 {
            x_obs.push(x);
        }
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("simulated path"));
    }

    let observed = ObservedPath {
        n: spec.n,
        x: x_obs,
        z: cov.observed(),
        meta: PathMeta {
            substeps: m,
            covariate_seed: cov.seed.unwrap_or(0),
            brownian_seed: seed,
            spec_digest: spec.digest(),
        },
    };
    Ok((observed, fine))
}
