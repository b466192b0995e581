//! Bayesian optimization with differentiable rollout acquisition functions.
//!
//! The crate is layered bottom-up: [`kernel`] (Matérn 5/2 with analytic
//! derivatives), [`gp`] (posterior, incremental conditioning, fantasy GPs,
//! data derivatives, hyperparameter fitting), [`acquisition`] (EI, PI, UCB
//! and their derivatives), [`sampler`] (scrambled Sobol and Gaussian
//! streams), [`rollout`] (trajectory sampling and the rollout estimator),
//! [`optimizer`] (inner Newton and outer Adam) and [`bench`] (test
//! functions, the BO loop, suites, CSV and plot scripts).

// `!(x > 0.0)` is used on purpose so NaN lands in the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod bench;
pub mod domain;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod optimizer;
pub mod rollout;
pub mod sampler;
pub mod scalar;

pub use domain::Bounds;
pub use error::{Error, Result};
pub use gp::{Dataset, FantasyGp, GpState, JointPosterior, PosteriorMoments};
pub use optimizer::{AdamConfig, InnerOptConfig};
pub use rollout::{GradientEstimator, RolloutConfig, RolloutEstimate, VarianceReduction};
pub use kernel::{KernelKind, KernelParams, RadialProfile};
pub use scalar::{Dual, Scalar, MAX_DUAL_DIM};

#[cfg(test)]
mod testutil;
