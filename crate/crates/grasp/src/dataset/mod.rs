//! Cornell Grasping Dataset ingestion, the preprocessed cache, augmentation
//! and network-input preparation.

mod augment;
mod cache;
mod cgd;
mod input;
mod pcd;
mod rects;
pub mod synth;

use std::collections::BTreeMap;

use grasp_core::{GraspRectangle, Grid, Point2};
use image::RgbImage;

pub use augment::{augment, crop_about, eval_crop, warp_scene, Augmented, MAX_RESAMPLES};
pub use cache::{convert, CacheSource, ConvertSummary, CACHE_VERSION};
pub use cgd::{discover, load_raw_scene, RawScene};
pub use input::{normalize_input, prepare_sample, InputMode, InputTensor, Sample, TransformMeta, DEFAULT_CROP};
pub use pcd::{format_pcd, inpaint, parse_pcd, pcd_to_depth, CGD_SHAPE};
pub use rects::{format_rects, parse_rect_file, parse_rects, RectFile};

use crate::{Error, Result};

/// One RGB-D scene with its grasp annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub id: String,
    pub rgb: RgbImage,
    /// Metres; 0 marks a missing reading.
    pub depth: Grid<f64>,
    pub positives: Vec<GraspRectangle>,
    pub negatives: Vec<GraspRectangle>,
}

impl SceneRecord {
    pub fn new(
        id: impl Into<String>,
        rgb: RgbImage,
        depth: Grid<f64>,
        positives: Vec<GraspRectangle>,
        negatives: Vec<GraspRectangle>,
    ) -> Result<Self> {
        let id = id.into();
        let (w, h) = rgb.dimensions();
        if depth.shape() != (h as usize, w as usize) {
            return Err(Error::InvalidScene {
                id,
                msg: format!("rgb is {h}x{w} but depth is {:?}", depth.shape()),
            });
        }
        Ok(Self {
            id,
            rgb,
            depth,
            positives,
            negatives,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.depth.shape()
    }

    /// Mean of the positive rectangle centers, or the image center.
    pub fn object_center(&self) -> Point2 {
        if self.positives.is_empty() {
            let (h, w) = self.shape();
            return Point2::new(h as f64 / 2.0, w as f64 / 2.0);
        }
        let sum = self.positives.iter().fold(Point2::default(), |acc, r| acc + r.center());
        sum * (1.0 / self.positives.len() as f64)
    }
}

/// Anything that can hand out scenes by id.
pub trait SceneSource: Sync {
    /// All scene ids, sorted.
    fn ids(&self) -> Vec<String>;
    fn load(&self, id: &str) -> Result<SceneRecord>;
}

/// Scenes held in memory.
#[derive(Clone, Debug, Default)]
pub struct MemorySource {
    scenes: BTreeMap<String, SceneRecord>,
}

impl MemorySource {
    pub fn new(scenes: impl IntoIterator<Item = SceneRecord>) -> Self {
        Self {
            scenes: scenes.into_iter().map(|s| (s.id.clone(), s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }
}

impl SceneSource for MemorySource {
    fn ids(&self) -> Vec<String> {
        self.scenes.keys().cloned().collect()
    }

    fn load(&self, id: &str) -> Result<SceneRecord> {
        self.scenes.get(id).cloned().ok_or_else(|| Error::InvalidScene {
            id: id.to_string(),
            msg: "unknown scene".into(),
        })
    }
}
