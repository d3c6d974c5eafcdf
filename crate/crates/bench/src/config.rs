//! Experiment configuration in a flat `key = value` text format.
//!
//! ```text
//! # reference design
//! n_grid = 100, 400, 1600
//! p_rule = fixed:20
//! s = 2
//! theta0_gen = fixed:1,-1
//! k0 = 1
//! alpha = 0.2
//! zeta = 0.1
//! replicates = 50
//! ```
//!
//! Lists are comma-separated and `#` starts a comment. Keys not listed
//! above take their defaults: `drift = zero`, `covariate_mode = ou_tanh`,
//! `cov_bound = 3`, `substeps = 50`, `x0 = 0`, `master_seed = 0`,
//! `output_dir = out`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use sparse_diff::model::{CovariateMode, DEFAULT_SUBSTEPS};
use sparse_diff::rng::{derive_seed, stream_rng, Stream};
use sparse_diff::{Drift, ModelSpec, TuningRule};

use crate::error::{BenchError, Result};

/// Seed group reserved for θ₀ draws; replicate seeds use `n` as the group.
const THETA0_GROUP: u64 = u64::MAX;

/// How the ambient dimension depends on `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PRule {
    Fixed(usize),
    /// `p = ⌈exp(c·n^ζ)⌉` with `ζ` taken from the tuning rule.
    Exp { c: f64 },
}

impl PRule {
    pub fn p(&self, n: usize, zeta: f64) -> usize {
        match *self {
            PRule::Fixed(p) => p,
            PRule::Exp { c } => (c * (n as f64).powf(zeta)).exp().ceil() as usize,
        }
    }
}

impl fmt::Display for PRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PRule::Fixed(p) => write!(f, "fixed:{p}"),
            PRule::Exp { c } => write!(f, "exp:{c}"),
        }
    }
}

impl FromStr for PRule {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':') {
            Some(("fixed", p)) => Ok(PRule::Fixed(parse_num("p_rule", p)?)),
            Some(("exp", c)) => Ok(PRule::Exp {
                c: parse_num("p_rule", c)?,
            }),
            _ => Err(BenchError::Config(format!(
                "p_rule must be `fixed:<p>` or `exp:<c>`, got `{s}`"
            ))),
        }
    }
}

/// How θ₀ is chosen for each ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta0Gen {
    /// Leading entries of θ₀; the rest are zero.
    Fixed(Vec<f64>),
    /// Random support of size `S`, random signs, common magnitude.
    Random { magnitude: f64 },
}

impl fmt::Display for Theta0Gen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta0Gen::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "fixed:{}", parts.join(","))
            }
            Theta0Gen::Random { magnitude } => write!(f, "random:{magnitude}"),
        }
    }
}

impl FromStr for Theta0Gen {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':') {
            Some(("fixed", list)) => Ok(Theta0Gen::Fixed(parse_list("theta0_gen", list)?)),
            Some(("random", m)) => Ok(Theta0Gen::Random {
                magnitude: parse_num("theta0_gen", m)?,
            }),
            _ => Err(BenchError::Config(format!(
                "theta0_gen must be `fixed:<v1,v2,...>` or `random:<m>`, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_grid: Vec<usize>,
    pub p_rule: PRule,
    pub s: usize,
    pub theta0_gen: Theta0Gen,
    pub tuning: TuningRule,
    pub replicates: usize,
    pub drift: Drift,
    pub covariate_mode: CovariateMode,
    pub cov_bound: f64,
    pub substeps: usize,
    pub x0: f64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// `n ∈ {100, 400, 1600}`, `p = 20`, `θ₀ = (1, -1, 0, …)`, `K₀ = 1`,
    /// `α = 0.2`, `ζ = 0.1`, 50 replicates, OU-tanh covariates with `C = 3`.
    pub fn reference() -> Self {
        Self {
            n_grid: vec![100, 400, 1600],
            p_rule: PRule::Fixed(20),
            s: 2,
            theta0_gen: Theta0Gen::Fixed(vec![1.0, -1.0]),
            tuning: TuningRule {
                k0: 1.0,
                alpha: 0.2,
                zeta: 0.1,
            },
            replicates: 50,
            drift: Drift::Zero,
            covariate_mode: CovariateMode::OuTanh,
            cov_bound: 3.0,
            substeps: DEFAULT_SUBSTEPS,
            x0: 0.0,
            master_seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                BenchError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(BenchError::Config(format!("key `{key}` given twice")));
            }
        }

        let mut take = |key: &str| entries.remove(key);
        let required = |v: Option<String>, key: &str| {
            v.ok_or_else(|| BenchError::Config(format!("missing required key `{key}`")))
        };
        let defaults = Self::reference();
        let n_grid = parse_list("n_grid", &required(take("n_grid"), "n_grid")?)?;
        let p_rule = required(take("p_rule"), "p_rule")?.parse()?;
        let s = parse_num("s", &required(take("s"), "s")?)?;
        let theta0_gen = required(take("theta0_gen"), "theta0_gen")?.parse()?;
        let tuning = TuningRule {
            k0: parse_num("k0", &required(take("k0"), "k0")?)?,
            alpha: parse_num("alpha", &required(take("alpha"), "alpha")?)?,
            zeta: parse_num("zeta", &required(take("zeta"), "zeta")?)?,
        };
        let replicates = parse_num("replicates", &required(take("replicates"), "replicates")?)?;
        let drift = match take("drift") {
            Some(v) => v.parse().map_err(|e| BenchError::Config(format!("drift: {e}")))?,
            None => defaults.drift,
        };
        let covariate_mode = match take("covariate_mode") {
            Some(v) => v
                .parse()
                .map_err(|e| BenchError::Config(format!("covariate_mode: {e}")))?,
            None => defaults.covariate_mode,
        };
        let cov_bound = take("cov_bound").map_or(Ok(defaults.cov_bound), |v| parse_num("cov_bound", &v))?;
        let substeps = take("substeps").map_or(Ok(defaults.substeps), |v| parse_num("substeps", &v))?;
        let x0 = take("x0").map_or(Ok(defaults.x0), |v| parse_num("x0", &v))?;
        let master_seed =
            take("master_seed").map_or(Ok(defaults.master_seed), |v| parse_num("master_seed", &v))?;
        let output_dir = take("output_dir").map_or(defaults.output_dir, PathBuf::from);

        if let Some(key) = entries.keys().next() {
            return Err(BenchError::Config(format!("unknown key `{key}`")));
        }
        let config = Self {
            n_grid,
            p_rule,
            s,
            theta0_gen,
            tuning,
            replicates,
            drift,
            covariate_mode,
            cov_bound,
            substeps,
            x0,
            master_seed,
            output_dir,
        };
        config.validate()?;
        Ok(config)
    }

    /// The config in the text format accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let grid: Vec<String> = self.n_grid.iter().map(|n| n.to_string()).collect();
        format!(
            "n_grid = {}\np_rule = {}\ns = {}\ntheta0_gen = {}\nk0 = {}\nalpha = {}\nzeta = {}\n\
             replicates = {}\ndrift = {}\ncovariate_mode = {}\ncov_bound = {}\nsubsteps = {}\n\
             x0 = {}\nmaster_seed = {}\noutput_dir = {}\n",
            grid.join(", "),
            self.p_rule,
            self.s,
            self.theta0_gen,
            self.tuning.k0,
            self.tuning.alpha,
            self.tuning.zeta,
            self.replicates,
            self.drift,
            self.covariate_mode,
            self.cov_bound,
            self.substeps,
            self.x0,
            self.master_seed,
            self.output_dir.display()
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if self.tuning.zeta >= 2.0 * self.tuning.alpha {
            return bad(format!(
                "zeta < 2*alpha is violated: zeta = {}, 2*alpha = {}",
                self.tuning.zeta,
                2.0 * self.tuning.alpha
            ));
        }
        self.tuning
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return bad("n_grid must list positive sample sizes".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("n_grid must be strictly increasing, got {:?}", self.n_grid));
        }
        if !(self.cov_bound.is_finite() && self.cov_bound > 0.0) {
            return bad(format!("cov_bound must be positive, got {}", self.cov_bound));
        }
        if self.substeps == 0 {
            return bad("substeps must be positive".into());
        }
        if !self.x0.is_finite() {
            return bad("x0 must be finite".into());
        }
        if let PRule::Exp { c } = self.p_rule {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("p_rule exp needs c > 0, got {c}"));
            }
        }
        for &n in &self.n_grid {
            let p = self.p(n);
            if p == 0 || p > 1_000_000 {
                return bad(format!("p = {p} at n = {n} is out of range"));
            }
            if self.s > p {
                return bad(format!("s = {} exceeds p = {p} at n = {n}", self.s));
            }
        }
        match &self.theta0_gen {
            Theta0Gen::Fixed(v) => {
                let nonzero = v.iter().filter(|x| **x != 0.0).count();
                if nonzero != self.s {
                    return bad(format!("theta0_gen has {nonzero} nonzero entries but s = {}", self.s));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return bad("theta0_gen entries must be finite".into());
                }
                if let Some(&n) = self.n_grid.iter().find(|&&n| self.p(n) < v.len()) {
                    return bad(format!("theta0_gen is longer than p = {} at n = {n}", self.p(n)));
                }
            }
            Theta0Gen::Random { magnitude } => {
                if !(magnitude.is_finite() && *magnitude > 0.0) {
                    return bad(format!("theta0_gen magnitude must be positive, got {magnitude}"));
                }
            }
        }
        Ok(())
    }

    pub fn p(&self, n: usize) -> usize {
        self.p_rule.p(n, self.tuning.zeta)
    }

    /// θ₀ for ambient dimension `p`; random draws depend only on
    /// `master_seed` and `p`.
    pub fn theta0(&self, p: usize) -> DVector<f64> {
        let mut theta = DVector::zeros(p);
        match &self.theta0_gen {
            Theta0Gen::Fixed(v) => {
                for (i, x) in v.iter().enumerate() {
                    theta[i] = *x;
                }
            }
            Theta0Gen::Random { magnitude } => {
                let seed = derive_seed(self.master_seed, THETA0_GROUP, p as u64);
                let mut rng = stream_rng(seed, Stream::Theta0);
                let mut support = sample(&mut rng, p, self.s).into_vec();
                support.sort_unstable();
                for i in support {
                    theta[i] = if rng.random::<bool>() { *magnitude } else { -magnitude };
                }
            }
        }
        theta
    }

    pub fn model_spec(&self, n: usize) -> ModelSpec {
        ModelSpec::new(n, self.theta0(self.p(n)))
            .with_drift(self.drift)
            .with_covariate_mode(self.covariate_mode)
            .with_cov_bound(self.cov_bound)
            .with_substeps(self.substeps)
            .with_x0(self.x0)
    }

    pub fn replicate_seed(&self, n: usize, replicate: usize) -> u64 {
        derive_seed(self.master_seed, n as u64, replicate as u64)
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| BenchError::Config(format!("{key}: cannot parse `{}`: {e}", value.trim())))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}
