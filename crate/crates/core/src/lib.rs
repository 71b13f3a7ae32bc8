//! Sticky Brownian motion and its Wiener stochastic flow of kernels.
//!
//! The crate simulates sticky Brownian motion by time-changing a reflected
//! path, builds the explicit flow of kernels driven by a single Brownian
//! path, evaluates the closed-form sticky transition semigroup, and
//! computes the truncated Wiener chaos expansion of the conditional law of
//! the sticky process given its driver. Each piece comes with the numerical
//! checks that tie the others together; the [`suites`] module bundles them
//! into the experiment runs exposed by the `stickyflow` binary.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the iterated sums they compute.
#![allow(clippy::needless_range_loop)]

pub mod chaos;
pub mod config;
pub mod error;
pub mod kernel_flow;
pub mod paths;
pub mod quad;
pub mod rng;
pub mod semigroup;
pub mod special;
pub mod stats;
pub mod sticky_sim;
pub mod suites;

pub use error::{Error, Result};
