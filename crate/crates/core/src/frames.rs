//! Image grasp to robot grasp: pixel deprojection through the camera
//! intrinsics, then a rigid camera-to-robot transform.
//!
//! Depth maps are indexed as `depth[(row, col)]`. A pixel position `(x, y)`
//! means column `x`, row `y`, so `depth[x][y]` in the usual formula is the
//! value at row `y`, column `x`.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};

use crate::geometry::{normalize_angle, ImageGrasp};
use crate::{Error, Grid, Result};
#[allow(unused_imports)]
use num_traits::Float;

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidInput("focal lengths must be positive"));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidInput("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Reads `[[fx, 0, cx], [0, fy, cy], [0, 0, 1]]`.
    pub fn from_matrix(k: &Matrix3<f64>) -> Result<Self> {
        let zero_ok = k[(0, 1)] == 0.0 && k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0;
        if !zero_ok || k[(2, 2)] != 1.0 {
            return Err(Error::InvalidInput(
                "intrinsic matrix must be [[fx,0,cx],[0,fy,cy],[0,0,1]]",
            ));
        }
        Self::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)])
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel position `(x, y)` of a camera-frame point.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Rigid transform from the camera frame to the robot base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrinsic {
    matrix: Matrix4<f64>,
}

impl Extrinsic {
    pub fn new(matrix: Matrix4<f64>) -> Result<Self> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidExtrinsic("non-finite entry"));
        }
        let last = matrix.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidExtrinsic("last row must be (0, 0, 0, 1)"));
        }
        let r: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let defect = (r.transpose() * r - Matrix3::identity()).abs().max();
        if defect > ORTHONORMAL_TOL {
            return Err(Error::InvalidExtrinsic("rotation is not orthonormal"));
        }
        if r.determinant() <= 0.0 {
            return Err(Error::InvalidExtrinsic("rotation has negative determinant"));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }
}

/// Grasp pose in the robot base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobotGrasp {
    /// Gripper center in meters.
    pub position: Point3<f64>,
    /// Rotation about the robot z axis, in `[-pi/2, pi/2)`.
    pub yaw: f64,
    /// Gripper opening in meters.
    pub width: f64,
    pub quality: f64,
}

fn valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

/// Depth at `(x, y)`, falling back to the median of valid depths in the
/// surrounding 5x5 window when the pixel itself has none.
pub fn depth_at(x: f64, y: f64, depth: &Grid<f64>) -> Result<f64> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::InvalidInput("pixel outside depth map"));
    }
    let (col, row) = (x.floor() as usize, y.floor() as usize);
    let Some(&d) = depth.get(row, col) else {
        return Err(Error::InvalidInput("pixel outside depth map"));
    };
    if valid_depth(d) {
        return Ok(d);
    }
    let mut around: Vec<f64> = Vec::new();
    for r in row.saturating_sub(2)..=row + 2 {
        for c in col.saturating_sub(2)..=col + 2 {
            if let Some(&v) = depth.get(r, c) {
                if valid_depth(v) {
                    around.push(v);
                }
            }
        }
    }
    if around.is_empty() {
        return Err(Error::NoDepth { x, y });
    }
    around.sort_by(f64::total_cmp);
    let n = around.len();
    Ok(if n % 2 == 1 {
        around[n / 2]
    } else {
        0.5 * (around[n / 2 - 1] + around[n / 2])
    })
}

/// Camera-frame point `(u, v, w)` in meters seen at pixel `(x, y)`.
pub fn deproject(x: f64, y: f64, depth: &Grid<f64>, k: &CameraIntrinsics) -> Result<Point3<f64>> {
    let d = depth_at(x, y, depth)?;
    Ok(deproject_with_depth(x, y, d, k))
}

pub fn deproject_with_depth(x: f64, y: f64, depth: f64, k: &CameraIntrinsics) -> Point3<f64> {
    Point3::new((x - k.cx) / k.fx * depth, (y - k.cy) / k.fy * depth, depth)
}

pub fn camera_to_robot(p: &Point3<f64>, t: &Extrinsic) -> Point3<f64> {
    t.matrix.transform_point(p)
}

/// Maps an image-frame grasp into the robot frame.
///
/// The yaw is the robot-frame heading of the rotated opening axis projected
/// onto the robot xy plane; with a top-down camera this is the image angle
/// composed with the camera's yaw.
pub fn image_grasp_to_robot_grasp(
    g: &ImageGrasp,
    depth: &Grid<f64>,
    k: &CameraIntrinsics,
    t: &Extrinsic,
) -> Result<RobotGrasp> {
    let (x, y) = (g.center.col, g.center.row);
    let p_cam = deproject(x, y, depth, k)?;
    let position = camera_to_robot(&p_cam, t);

    // opening axis in camera coordinates (x right, y down)
    let axis_cam = Vector3::new(g.angle.cos(), -g.angle.sin(), 0.0);
    let axis_robot = t.rotation() * axis_cam;
    if axis_robot.x.hypot(axis_robot.y) < 1e-9 {
        return Err(Error::InvalidGeometry("grasp axis is parallel to the robot z axis"));
    }
    let yaw = normalize_angle(axis_robot.y.atan2(axis_robot.x));

    Ok(RobotGrasp {
        position,
        yaw,
        width: g.width * p_cam.z / k.fx,
        quality: g.quality,
    })
}
