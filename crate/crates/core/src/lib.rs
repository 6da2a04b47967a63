//! Desk-scale laboratory for training length-compressed sequence policies.
//!
//! The crate provides a small, fully enumerable reasoning environment (a
//! subsequence-completion task family with a tabular softmax policy), reward
//! shaping that scales a within-group length penalty by task difficulty,
//! prefix-anchored rollout generation with a linearly decaying protection
//! window, and a critic-free group-relative policy-gradient trainer. Exact
//! enumeration oracles cross-check the sampled quantities, and a finite
//! difference oracle cross-checks the analytic gradient.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the trainer
//! and CLI use the `f64` aliases exported at the crate root.

// Validation guards are written `!(x > 0)` on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

pub mod analysis;
pub mod config;
pub mod env;
pub mod error;
pub mod metrics;
pub mod optimizer;
pub mod penalty;
pub mod persist;
pub mod prefix;
pub mod runner;
pub mod trainer;

pub use error::{Error, Result};

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used when ingesting parsed config values.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to any Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Concrete `f64` instantiations used by the trainer and the CLI.
pub type PolicyParamsF64 = env::PolicyParams<f64>;
pub type RolloutF64 = env::Rollout<f64>;
pub type RolloutGroupF64 = optimizer::RolloutGroup<f64>;
pub type ExperimentConfigF64 = config::ExperimentConfig<f64>;
pub type TrainerStateF64 = trainer::TrainerState<f64>;

/// Single-precision aliases, mainly exercised by the test suite.
pub type PolicyParamsF32 = env::PolicyParams<f32>;
pub type RolloutF32 = env::Rollout<f32>;
