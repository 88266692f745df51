//! Camera calibration file.
//!
//! ```toml
//! # intrinsics, pixels: [[fx, 0, cx], [0, fy, cy], [0, 0, 1]]
//! K = [[600.0, 0.0, 320.0], [0.0, 600.0, 240.0], [0.0, 0.0, 1.0]]
//! # camera-to-robot rigid transform, metres, row-major
//! T = [[1.0, 0.0, 0.0, 0.4],
//!      [0.0, 1.0, 0.0, 0.0],
//!      [0.0, 0.0, 1.0, 0.0],
//!      [0.0, 0.0, 0.0, 1.0]]
//! ```

use std::path::Path;

use grasp_core::frames::{CameraIntrinsics, Extrinsic};
use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    #[serde(rename = "K")]
    k: [[f64; 3]; 3],
    #[serde(rename = "T")]
    t: [[f64; 4]; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    pub extrinsic: Extrinsic,
}

impl Calibration {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: CalibrationFile =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("calibration file: {e}")))?;
        let k = Matrix3::from_fn(|r, c| f.k[r][c]);
        let t = Matrix4::from_fn(|r, c| f.t[r][c]);
        let intrinsics =
            CameraIntrinsics::from_matrix(&k).map_err(|e| Error::InvalidConfig(format!("calibration K: {e}")))?;
        Ok(Self {
            intrinsics,
            extrinsic: Extrinsic::new(t)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        let k = self.intrinsics.matrix();
        let t = self.extrinsic.matrix();
        let f = CalibrationFile {
            k: std::array::from_fn(|r| std::array::from_fn(|c| k[(r, c)])),
            t: std::array::from_fn(|r| std::array::from_fn(|c| t[(r, c)])),
        };
        toml::to_string(&f).expect("calibration serializes")
    }
}
