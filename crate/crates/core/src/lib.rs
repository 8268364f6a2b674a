//! Best-arm identification under linear multinomial-logit preference feedback.
//!
//! A learner repeatedly queries a subset of `K` arms (feature vectors in
//! `R^d`) and observes a single winner drawn from the softmax of the arm
//! utilities `<theta*, a>`. The crate provides:
//!
//! * [`model`]: instances, actions and feedback simulation.
//! * [`estimator`]: the regularized maximum-likelihood estimate of `theta*`.
//! * [`design`]: the information matrix and greedy subset selection.
//! * [`confidence`]: confidence widths, stopping and elimination tests.
//! * [`algorithms`]: static, random and batch-adaptive allocation.
//! * [`theory`]: lower- and upper-bound evaluation and curvature diagnostics.
//! * [`harness`]: experiment specs, replication, aggregation and output files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod confidence;
pub mod design;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod theory;
pub mod verify;

pub use algorithms::{run_adaptive, run_random, run_static, RunConfig, RunResult, SelectionRule};
pub use error::{Error, Result};
pub use estimator::{fit_mle, Estimate};
pub use model::{ArmSet, FeedbackModel, FeedbackSample, History, Instance, SubsetAction};
