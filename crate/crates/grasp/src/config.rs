//! Run configuration: a TOML file with command-line overrides on top.
//!
//! ```toml
//! data = "cache/cgd"          # preprocessed cache directory
//! out = "runs/ginnet"
//! checkpoint = "runs/ginnet/best.ckpt"
//! calibration = "calib.toml"
//!
//! [train]
//! model = "ginnet"             # or "rginnet"
//! epochs = 50
//! seed = 0
//! label_fraction = 1.0
//!
//! [eval]
//! iou_min = 0.25
//! angle_max_deg = 30.0
//! ```
//!
//! Architectures default to the bundled specs; `[arch.ginnet]` and
//! `[arch.vqvae]` replace them. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use grasp_core::MetricThresholds;
use serde::{Deserialize, Serialize};

use crate::learn::{ArchConfig, TrainConfig};
use crate::model::ModelKind;
use crate::{Error, Result};

/// Environment variable naming the default cache directory.
pub const CACHE_ENV: &str = "GRASP_CACHE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub iou_min: f64,
    pub angle_max_deg: f64,
    /// Grasps listed by `predict`.
    pub top_k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let th = MetricThresholds::default();
        Self {
            iou_min: th.iou_min,
            angle_max_deg: th.angle_max_deg,
            top_k: 5,
        }
    }
}

impl EvalConfig {
    pub fn thresholds(&self) -> Result<MetricThresholds> {
        Ok(MetricThresholds::new(self.iou_min, self.angle_max_deg)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub arch: ArchConfig,
}

/// Command-line values that replace file values when present.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub label_fraction: Option<f64>,
    pub iou_min: Option<f64>,
    pub angle_max: Option<f64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies overrides, then fills `data` from the environment when it is
    /// still unset.
    pub fn resolve(mut self, o: &Overrides, env_cache: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(m) = o.model {
            self.train.model = m;
        }
        if let Some(f) = o.label_fraction {
            self.train.label_fraction = f;
        }
        if let Some(v) = o.iou_min {
            self.eval.iou_min = v;
        }
        if let Some(v) = o.angle_max {
            self.eval.angle_max_deg = v;
        }
        self.data = o.data.clone().or(self.data).or(env_cache);
        self.checkpoint = o.checkpoint.clone().or(self.checkpoint);
        self.out = o.out.clone().or(self.out);
        self.train.validate()?;
        self.eval.thresholds()?;
        self.arch.ginnet.validate()?;
        self.arch.vqvae.validate()?;
        Ok(self)
    }

    pub fn require_data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig(format!("no dataset: pass --data or set {CACHE_ENV}")))
    }

    pub fn require_checkpoint(&self) -> Result<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no checkpoint: pass --checkpoint".into()))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("no output location: pass --out".into()))
    }
}
