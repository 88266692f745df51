//! GI-NNet and RGI-NNet grasp detection on RGB-D images.
//!
//! Builds on the geometry in `grasp_core` with the parts that need `std`:
//! Cornell dataset ingestion and the preprocessed cache, a small CPU
//! network toolkit, the two networks, training and evaluation, checkpoint
//! files, calibration loading, visualization and the `grasp` command line.
// NaN-rejecting range checks read best as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arch;
pub mod array;
pub mod calib;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod ginnet;
pub mod learn;
pub mod model;
pub mod nn;
pub mod viz;
pub mod vqvae;

pub use error::{Error, Result};
