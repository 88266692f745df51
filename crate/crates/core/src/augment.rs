//! Similarity transforms used for crop/zoom/rotate augmentation.
//!
//! Image resampling lives with the image types; this module only holds the
//! transform and its action on points and rectangles, so the same
//! transform can be replayed on the original annotations.

use core::f64::consts::FRAC_PI_2;

use rand::Rng;

use crate::geometry::{GraspRectangle, Point2};
use crate::Result;
#[allow(unused_imports)]
use num_traits::Float;

/// `p -> output_center + zoom * R(rotation) (p - source_center)` in
/// `(row, col)` coordinates. `R` turns counter-clockwise on screen, so a
/// grasp angle increases by `rotation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub rotation: f64,
    pub zoom: f64,
    pub source_center: Point2,
    pub output_center: Point2,
}

impl Similarity {
    /// Pure crop: moves `source_center` onto `output_center`.
    pub fn crop(source_center: Point2, output_center: Point2) -> Self {
        Self {
            rotation: 0.0,
            zoom: 1.0,
            source_center,
            output_center,
        }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let d = p - self.source_center;
        let (s, c) = self.rotation.sin_cos();
        let rotated = Point2::new(c * d.row - s * d.col, s * d.row + c * d.col);
        self.output_center + rotated * self.zoom
    }

    pub fn inverse_apply(&self, p: Point2) -> Point2 {
        let d = (p - self.output_center) * (1.0 / self.zoom);
        let (s, c) = self.rotation.sin_cos();
        let unrotated = Point2::new(c * d.row + s * d.col, -s * d.row + c * d.col);
        self.source_center + unrotated
    }

    pub fn apply_rect(&self, rect: &GraspRectangle) -> Result<GraspRectangle> {
        rect.map_vertices(|p| self.apply(p))
    }
}

/// Sampling ranges for random augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentRanges {
    /// Rotation drawn uniformly from `[-max_rotation, max_rotation)`.
    pub max_rotation: f64,
    pub zoom: (f64, f64),
    /// Crop-center jitter, uniform in `[-jitter, jitter]` pixels per axis.
    pub jitter: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        Self {
            max_rotation: FRAC_PI_2,
            zoom: (0.85, 1.15),
            jitter: 20.0,
        }
    }
}

impl AugmentRanges {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, object_center: Point2, crop_size: usize) -> Similarity {
        let rotation = if self.max_rotation > 0.0 {
            rng.random_range(-self.max_rotation..self.max_rotation)
        } else {
            0.0
        };
        let zoom = if self.zoom.1 > self.zoom.0 {
            rng.random_range(self.zoom.0..=self.zoom.1)
        } else {
            self.zoom.0
        };
        let mut jitter = || {
            if self.jitter > 0.0 {
                rng.random_range(-self.jitter..=self.jitter)
            } else {
                0.0
            }
        };
        let source_center = object_center + Point2::new(jitter(), jitter());
        let half = crop_size as f64 / 2.0;
        Similarity {
            rotation,
            zoom,
            source_center,
            output_center: Point2::new(half, half),
        }
    }
}
