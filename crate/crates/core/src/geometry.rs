//! Grasp representations in the image plane.
//!
//! Angle convention: a grasp angle `psi` is the orientation of the gripper
//! opening axis, measured counter-clockwise on screen from the `+col` axis.
//! Because rows grow downwards the opening axis direction in `(row, col)`
//! is `(-sin psi, cos psi)`. Angles are taken modulo pi (a parallel gripper
//! is symmetric) and normalized into `[-pi/2, pi/2)`.

use core::f64::consts::{FRAC_PI_2, PI};
use core::ops::{Add, Mul, Sub};

use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Opposite rectangle edges may deviate from parallel by this much (radians)
/// before a rectangle is reported as malformed.
pub const SKEW_TOLERANCE: f64 = 0.05;

const AREA_EPS: f64 = 1e-9;

/// A point in pixel coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point2 {
    pub row: f64,
    pub col: f64,
}

impl Point2 {
    pub const fn new(row: f64, col: f64) -> Self {
        Self { row, col }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.row * other.row + self.col * other.col
    }

    /// z-component of the 2-D cross product, with `row` as the first axis.
    pub fn cross(self, other: Self) -> f64 {
        self.row * other.col - self.col * other.row
    }

    pub fn norm(self) -> f64 {
        self.row.hypot(self.col)
    }

    pub fn is_finite(self) -> bool {
        self.row.is_finite() && self.col.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.row + rhs.row, self.col + rhs.col)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.row - rhs.row, self.col - rhs.col)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.row * rhs, self.col * rhs)
    }
}

/// Wraps an angle into `[-pi/2, pi/2)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut r = (angle + FRAC_PI_2) % PI;
    if r < 0.0 {
        r += PI;
    }
    let r = r - FRAC_PI_2;
    // rounding in `%` can land exactly on the excluded upper bound
    if r >= FRAC_PI_2 {
        r - PI
    } else {
        r
    }
}

/// Recovers a grasp angle from its `(sin 2psi, cos 2psi)` encoding.
pub fn angle_from_components(sin2: f64, cos2: f64) -> Result<f64> {
    if sin2 == 0.0 && cos2 == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    Ok(normalize_angle(0.5 * sin2.atan2(cos2)))
}

/// Smallest difference between two grasp angles under pi-periodicity, in
/// degrees. Always in `[0, 90]`.
pub fn angle_offset_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % PI;
    d.min(PI - d).to_degrees()
}

/// Unit vector along the gripper opening axis for angle `psi`.
pub fn opening_axis(psi: f64) -> Point2 {
    Point2::new(-psi.sin(), psi.cos())
}

/// Unit vector along the jaw edges, perpendicular to the opening axis.
pub fn jaw_axis(psi: f64) -> Point2 {
    Point2::new(psi.cos(), psi.sin())
}

/// A grasp given as the four corners of a (possibly slightly skewed)
/// rectangle, in the order used by the Cornell grasping dataset.
///
/// Vertices `0 -> 1` run along the opening axis: their distance is the grasp
/// width and their direction is the grasp angle. Vertices `1 -> 2` run along
/// a jaw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraspRectangle {
    vertices: [Point2; 4],
}

impl GraspRectangle {
    pub fn new(vertices: [Point2; 4]) -> Result<Self> {
        if !vertices.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite rectangle vertex"));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2; 4] {
        &self.vertices
    }

    pub fn center(&self) -> Point2 {
        let sum = self.vertices.iter().fold(Point2::default(), |acc, &v| acc + v);
        sum * 0.25
    }

    /// Signed shoelace area; positive when the vertices turn from `+row`
    /// towards `+col`.
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        0.5 * (0..4).map(|i| v[i].cross(v[(i + 1) % 4])).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Largest angle (radians) between a pair of opposite edges.
    pub fn skew(&self) -> f64 {
        let v = &self.vertices;
        let between = |a: Point2, b: Point2| {
            let c = (a.cross(b)).abs();
            let d = (a.dot(b)).abs();
            c.atan2(d)
        };
        let e01 = v[1] - v[0];
        let e32 = v[2] - v[3];
        let e12 = v[2] - v[1];
        let e03 = v[3] - v[0];
        between(e01, e32).max(between(e12, e03))
    }

    /// True when the rectangle is within [`SKEW_TOLERANCE`] of a true
    /// rectangle and has non-zero area.
    pub fn is_well_formed(&self) -> bool {
        self.area() > AREA_EPS && self.skew() <= SKEW_TOLERANCE
    }

    /// Mean length of the two jaw edges.
    pub fn jaw_height(&self) -> f64 {
        let v = &self.vertices;
        0.5 * ((v[2] - v[1]).norm() + (v[3] - v[0]).norm())
    }

    /// Converts to the `(center, angle, width, quality)` form. Ground-truth
    /// rectangles are positives, so quality is 1.
    pub fn to_image_grasp(&self) -> Result<ImageGrasp> {
        if self.area() <= AREA_EPS {
            return Err(Error::InvalidGeometry("zero-area rectangle"));
        }
        let v = &self.vertices;
        let e01 = v[1] - v[0];
        let e32 = v[2] - v[3];
        let axis = e01 + e32;
        let angle = normalize_angle((-axis.row).atan2(axis.col));
        let width = 0.5 * (e01.norm() + e32.norm());
        Ok(ImageGrasp {
            center: self.center(),
            angle,
            width,
            quality: 1.0,
        })
    }

    /// Point-in-rectangle test, boundary inclusive.
    pub fn contains(&self, p: Point2) -> bool {
        let sign = if self.signed_area() >= 0.0 { 1.0 } else { -1.0 };
        let v = &self.vertices;
        (0..4).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % 4];
            sign * (b - a).cross(p - a) >= 0.0
        })
    }

    /// Column interval covered by the rectangle along the horizontal line at
    /// `row`, or `None` when the line misses it.
    pub fn row_span(&self, row: f64) -> Option<(f64, f64)> {
        let v = &self.vertices;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..4 {
            let a = v[i];
            let b = v[(i + 1) % 4];
            let (r0, r1) = (a.row.min(b.row), a.row.max(b.row));
            if row < r0 || row > r1 {
                continue;
            }
            if a.row == b.row {
                lo = lo.min(a.col.min(b.col));
                hi = hi.max(a.col.max(b.col));
            } else {
                let t = (row - a.row) / (b.row - a.row);
                let c = a.col + t * (b.col - a.col);
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Row extent `(min, max)` of the vertices.
    pub fn row_bounds(&self) -> (f64, f64) {
        self.vertices
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v.row), hi.max(v.row))
            })
    }

    pub fn map_vertices(&self, f: impl Fn(Point2) -> Point2) -> Result<Self> {
        let v = &self.vertices;
        Self::new([f(v[0]), f(v[1]), f(v[2]), f(v[3])])
    }
}

/// A grasp in the image frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageGrasp {
    /// Grasp center in pixels.
    pub center: Point2,
    /// Opening-axis angle in `[-pi/2, pi/2)`.
    pub angle: f64,
    /// Opening width in pixels.
    pub width: f64,
    /// Grasp quality in `[0, 1]`.
    pub quality: f64,
}

impl ImageGrasp {
    /// Builds a grasp, normalizing the angle and checking the value ranges.
    pub fn new(center: Point2, angle: f64, width: f64, quality: f64) -> Result<Self> {
        if !center.is_finite() || !angle.is_finite() {
            return Err(Error::InvalidInput("non-finite grasp center or angle"));
        }
        if !(width >= 0.0) {
            return Err(Error::InvalidInput("grasp width must be non-negative"));
        }
        if !(0.0..=1.0).contains(&quality) {
            return Err(Error::InvalidInput("grasp quality must lie in [0, 1]"));
        }
        Ok(Self {
            center,
            angle: normalize_angle(angle),
            width,
            quality,
        })
    }

    /// Default jaw height used when turning predictions into rectangles.
    pub fn default_jaw_height(&self) -> f64 {
        self.width / 2.0
    }

    /// Rectangle with the given jaw height, vertices ordered as in
    /// [`GraspRectangle`].
    pub fn to_rect(&self, jaw_height: f64) -> Result<GraspRectangle> {
        if !(self.width > 0.0) {
            return Err(Error::DegenerateGrasp);
        }
        if !(jaw_height > 0.0) {
            return Err(Error::InvalidInput("jaw height must be positive"));
        }
        let a = opening_axis(self.angle) * (self.width / 2.0);
        let n = jaw_axis(self.angle) * (jaw_height / 2.0);
        let c = self.center;
        GraspRectangle::new([c - a - n, c + a - n, c + a + n, c - a + n])
    }

    pub fn to_default_rect(&self) -> Result<GraspRectangle> {
        self.to_rect(self.default_jaw_height())
    }
}
