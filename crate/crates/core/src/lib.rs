//! Numerical core for high-recall semantic segmentation.
//!
//! Everything in this crate is pure computation over in-memory buffers and
//! builds under `#![no_std]` with `alloc`. File formats, manifests and the
//! command-line front end live in the `segrecall` crate.
//!
//! Modules:
//! - [`types`]: class specs, label maps, probability maps, one-hot vectors.
//! - [`metrics`]: confusion matrices and per-class / per-group precision,
//!   recall and IoU.
//! - [`losses`]: cross-entropy, frequency-weighted cross-entropy and the
//!   importance-aware loss with analytic logit gradients.
//! - [`decision`]: Bayes and maximum-likelihood pixel decision rules and
//!   spatial class priors.
//! - [`gcn`]: class graphs, adjacency normalization, graph-convolution
//!   forward passes and the feature-selecting classifier.
//! - [`archcalc`]: shape, receptive-field and parameter accounting for the
//!   encoder / pyramid pooling / upsampling decoder network.

#![no_std]
#![forbid(unsafe_code)]
// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod archcalc;
pub mod decision;
pub mod error;
pub mod gcn;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod types;

pub use error::{Error, Result};
pub use types::{ClassSpec, LabelMap, ProbMap, DEFAULT_IGNORE_ID};
