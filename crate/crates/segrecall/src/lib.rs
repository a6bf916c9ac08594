//! File formats, dataset manifests, reports and the `segrecall` command line
//! on top of [`segrecall_core`].
//!
//! - [`pgm`]: binary PGM label maps.
//! - [`sft`]: `SFT1` tensors for probability maps, priors, features and weights.
//! - [`config`]: JSON class specs, groups, loss configs, graphs and run records.
//! - [`manifest`]: dataset manifests with a resolution check.
//! - [`report`]: metrics CSV and architecture tables.

pub mod cli;
pub mod config;
pub mod fixture;
pub mod init;
pub mod manifest;
pub mod pgm;
pub mod report;
pub mod sft;

pub use segrecall_core as core;
