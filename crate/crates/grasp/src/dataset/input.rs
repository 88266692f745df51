//! Network input preparation: crop (optionally augmented), normalize and
//! encode the target maps.

use grasp_core::augment::{AugmentRanges, Similarity};
use grasp_core::maps::DEFAULT_MAX_WIDTH;
use grasp_core::{encode_target_maps, GraspMapSet, GraspRectangle, Point2};
use ndarray::Array3;

use super::augment::{augment, eval_crop};
use super::pcd::inpaint;
use super::SceneRecord;
use crate::{Error, Result};

/// Side of the square network input.
pub const DEFAULT_CROP: usize = 224;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    #[default]
    Rgbd,
    Rgb,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            Self::Rgbd => 4,
            Self::Rgb => 3,
        }
    }
}

/// How an input crop relates to its source image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformMeta {
    /// Source pixel coordinates to crop coordinates.
    pub transform: Similarity,
    pub source_shape: (usize, usize),
    pub crop: usize,
}

impl TransformMeta {
    pub fn identity(shape: (usize, usize)) -> Self {
        assert_eq!(shape.0, shape.1, "identity meta needs a square image");
        Self {
            transform: Similarity::crop(Point2::default(), Point2::default()),
            source_shape: shape,
            crop: shape.0,
        }
    }

    /// Source coordinates of the crop's top-left corner.
    pub fn offset(&self) -> Point2 {
        self.transform.inverse_apply(Point2::default())
    }

    pub fn scale(&self) -> f64 {
        self.transform.zoom
    }

    pub fn rotation(&self) -> f64 {
        self.transform.rotation
    }

    pub fn to_source(&self, p: Point2) -> Point2 {
        self.transform.inverse_apply(p)
    }
}

/// Normalized `(channels, H, W)` input with channel order R, G, B[, D].
#[derive(Clone, Debug, PartialEq)]
pub struct InputTensor {
    pub data: Array3<f64>,
    pub meta: TransformMeta,
}

/// RGB scaled to `[0, 1]` then shifted by the whole-image mean; depth
/// inpainted, shifted by its mean and clipped to `[-1, 1]`.
pub fn normalize_input(scene: &SceneRecord, mode: InputMode) -> Result<Array3<f64>> {
    let (h, w) = scene.shape();
    let mut data = Array3::zeros((mode.channels(), h, w));
    let n = (h * w) as f64;
    let mut mean = 0.0;
    for (c, r, px) in scene.rgb.enumerate_pixels() {
        for k in 0..3 {
            let v = px[k] as f64 / 255.0;
            data[[k, r as usize, c as usize]] = v;
            mean += v;
        }
    }
    mean /= 3.0 * n;
    data.slice_mut(ndarray::s![0..3, .., ..]).mapv_inplace(|v| v - mean);
    if mode == InputMode::Rgbd {
        let mut depth = scene.depth.clone();
        inpaint(&mut depth);
        if !depth.as_slice().iter().any(|&v| v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidScene {
                id: scene.id.clone(),
                msg: "depth has no valid readings".into(),
            });
        }
        let dmean = depth.as_slice().iter().sum::<f64>() / n;
        for r in 0..h {
            for c in 0..w {
                data[[3, r, c]] = (depth[(r, c)] - dmean).clamp(-1.0, 1.0);
            }
        }
    }
    Ok(data)
}

/// One training or evaluation example.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub input: InputTensor,
    pub targets: GraspMapSet,
    /// Positives in crop coordinates.
    pub positives: Vec<GraspRectangle>,
}

/// Crops `scene` (augmented when `aug` carries ranges and a seed, else the
/// evaluation crop), normalizes it and encodes its positives.
pub fn prepare_sample(
    scene: &SceneRecord,
    mode: InputMode,
    crop: usize,
    aug: Option<(&AugmentRanges, u64)>,
) -> Result<Sample> {
    let (view, transform) = match aug {
        Some((ranges, seed)) => {
            let a = augment(scene, ranges, crop, seed)?;
            (a.scene, a.transform)
        }
        None => eval_crop(scene, crop)?,
    };
    let data = normalize_input(&view, mode)?;
    let targets = encode_target_maps(&view.positives, crop, crop, DEFAULT_MAX_WIDTH)?;
    Ok(Sample {
        id: scene.id.clone(),
        input: InputTensor {
            data,
            meta: TransformMeta {
                transform,
                source_shape: scene.shape(),
                crop,
            },
        },
        targets,
        positives: view.positives,
    })
}
