//! Information-weighted dual model predictive control for linear systems with
//! unknown dynamics.
//!
//! The controller keeps a Gaussian posterior over `vec([A B])`, updated by
//! Bayesian linear regression after every transition. Its stage cost rewards
//! the first-order information gain `zᵀW(Σ)z` of the current covariance. The
//! [`metrics`] module measures how far the resulting control law departs from
//! certainty equivalence; [`sim`] runs the closed-loop Monte Carlo
//! experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod error;
pub mod infocost;
pub mod linalg;
pub mod metrics;
pub mod mpc;
pub mod noise;
pub mod plant;
pub mod qp;
pub mod sim;

pub use belief::ParamBelief;
pub use error::{Error, Result};
pub use mpc::{MpcConfig, PolicyKind};
pub use noise::NoiseMode;
pub use plant::Plant;
pub use sim::{EpisodeConfig, EpisodeLog, StepRecord};
