//! Sparse estimation of a covariate-driven diffusion coefficient.
//!
//! The model is the scalar diffusion
//!
//! ```text
//! X_t = X_0 + ∫₀ᵗ b(X_s) ds + ∫₀ᵗ exp(θᵀZ_s) dW_s,   t ∈ [0, 1],
//! ```
//!
//! observed at `t_k = k/n` together with a bounded `p`-dimensional
//! covariate process `Z`. The parameter `θ ∈ ℝᵖ` is assumed sparse and is
//! estimated by the Dantzig selector built on the Gaussian quasi-likelihood
//! of the increments, which needs no knowledge of the drift `b`.
//!
//! * [`model`] simulates covariates and paths; [`pathfile`] stores them.
//! * [`quasi_lik`] evaluates the quasi-likelihood, its score `ψ_n`, the
//!   matrices `V_n` and `J_n`, and diagnostic decompositions of the score.
//! * [`selector`] computes the estimator and the tuning level `γ_n`.
//! * [`factors`] computes the cone-restricted factors of `J_n` that govern
//!   the estimation error.
//!
//! ```
//! use nalgebra::DVector;
//! use sparse_diff::model::{simulate, ModelSpec};
//! use sparse_diff::selector::{estimate, TuningRule};
//!
//! let mut theta0 = DVector::zeros(5);
//! theta0[0] = 1.0;
//! theta0[3] = -1.0;
//! let spec = ModelSpec::new(400, theta0.clone());
//! let path = simulate(&spec, 7)?;
//! let gamma = TuningRule::new(1.0, 0.2, 0.1)?.gamma_n(400)?;
//! let fit = estimate(&path, gamma)?;
//! assert!(fit.feasible);
//! assert!((&fit.theta_hat - &theta0).norm() < theta0.norm());
//! # Ok::<(), sparse_diff::Error>(())
//! ```

pub mod error;
pub mod factors;
pub mod model;
pub mod pathfile;
pub mod quasi_lik;
pub mod rng;
pub mod selector;
pub mod stats;

pub use error::{Error, Result};
pub use factors::{factor_report, FactorReport, FactorValue, Method};
pub use model::{simulate, Drift, ModelSpec, ObservedPath};
pub use selector::{estimate, gamma_n, EstimateResult, TuningRule};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/quasi-likelihood.md")]
    mod quasi_likelihood {}
    #[doc = include_str!("../../../book/src/selector.md")]
    mod selector {}
    #[doc = include_str!("../../../book/src/factors.md")]
    mod factors {}
}
