//! Testing polynomial equality constraints on Gaussian covariance matrices
//! with complete and incomplete U-statistics and the Wald test.
//!
//! The crate is organised bottom-up:
//!
//! * [`covmodel`]: covariance models and Gaussian sampling.
//! * [`poly`]: polynomial constraints `f(Θ)` with evaluation and gradients.
//! * [`wick`]: exact Gaussian moments (Isserlis), `V(Θ)` and kernel variances.
//! * [`kernel`]: symbolic kernels, symmetrization, partial expectations and
//!   Hoeffding projections.
//! * [`estimators`]: U-statistics, Wald statistics and studentizers.
//! * [`experiments`]: seeded Monte Carlo size experiments and diagnostics.
//! * [`selfcheck`]: the exact-identity suite behind `ustest selfcheck`.
//!
//! Coordinates are 0-based throughout the Rust API. The plain-text constraint
//! format and the CLI use 1-based indices.

pub mod covmodel;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod kernel;
pub mod poly;
pub mod rng;
pub mod selfcheck;
pub mod wick;

pub use covmodel::{CovModel, SampleMatrix};
pub use error::{Error, Result};
pub use estimators::{BudgetPlan, Sidedness, TestOutcome};
pub use kernel::{MixedKernel, SymmetricKernel};
pub use poly::{GradientVector, PairIndex, PolyConstraint};
pub use rng::{Purpose, SeedStream};
pub use wick::{GaussianMoments, WishartCov};
