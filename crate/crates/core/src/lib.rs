//! Grasp geometry and numerics that do not need an operating system.
//!
//! This crate holds everything in the grasp pipeline that is pure math:
//! rectangle and image-frame grasp representations, pixel-wise target maps,
//! the rectangle success metric, camera/robot frame transforms, the Huber
//! grasp loss, vector-quantization math, and deterministic dataset splits.
//! It is `no_std` and only needs `alloc`.
//!
//! Coordinates are `(row, col)` in pixels. Pixel `(r, c)` covers the square
//! `[r, r + 1) x [c, c + 1)`, so its center is `(r + 0.5, c + 0.5)`.
#![no_std]
// NaN-rejecting range checks read best as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
mod error;
pub mod frames;
pub mod geometry;
mod grid;
pub mod loss;
pub mod maps;
pub mod metric;
pub mod quantize;
pub mod split;

pub use error::{Error, Result};
pub use geometry::{angle_from_components, angle_offset_deg, normalize_angle, GraspRectangle, ImageGrasp, Point2};
pub use grid::Grid;
pub use maps::{decode_grasps, encode_target_maps, GraspMapSet};
pub use metric::{iou, rectangle_metric, MetricThresholds};
