//! Double Bayesian smoothing for conditionally linear Gaussian state-space models.
//!
//! The crate pairs an extended Kalman filter over the whole state with a
//! particle filter over the nonlinear substate (the "dual" filter), and runs
//! backward passes that fuse Gaussian backward-information messages with
//! particle weights to obtain smoothed trajectories or smoothed marginals.
//!
//! Main entry points:
//! - [`model`]: the model trait plus two benchmark models and an affine one.
//! - [`forward`]: the dual filter, its simplified variant and a marginalized
//!   particle filter baseline.
//! - [`backward::run_smoother`]: the four smoothers.
//! - [`oracle`]: exact Kalman/RTS references and quadrature.
//! - [`complexity`]: memory and flop-count models.
//! - [`bench`]: Monte Carlo experiment harness and report writers.

// negated float comparisons are used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod bench;
pub mod cli;
pub mod complexity;
pub mod error;
pub mod forward;
pub mod gaussian;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod particles;

pub use error::{Error, Result};
