//! Preprocessed dataset cache.
//!
//! ```text
//! <cache>/VERSION          "grasp-cache 1"
//! <cache>/index.txt        rectangle index (below)
//! <cache>/<id>r.png        RGB image, copied byte for byte
//! <cache>/<id>d.grsp       depth in metres, (H, W) array container
//! ```
//!
//! The index starts with `# grasp-cache 1`; each scene is a line
//! `scene <id> <rows> <cols>` followed by one `pos` or `neg` line per
//! rectangle holding its four vertices as `row col` pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use grasp_core::{GraspRectangle, Point2};

use super::{discover, load_raw_scene, SceneRecord, SceneSource};
use crate::array::{array_to_grid, grid_to_array, load_array, save_array};
use crate::{Error, Result};

pub const CACHE_VERSION: u32 = 1;

fn version_line() -> String {
    format!("grasp-cache {CACHE_VERSION}")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConvertSummary {
    pub scenes: usize,
    pub positives: usize,
    pub negatives: usize,
    pub skipped_nan: usize,
    pub skewed: usize,
}

impl std::fmt::Display for ConvertSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} scenes, {} positive, {} negative",
            self.scenes, self.positives, self.negatives
        )?;
        if self.skipped_nan > 0 || self.skewed > 0 {
            write!(
                f,
                " ({} NaN groups skipped, {} skewed kept)",
                self.skipped_nan, self.skewed
            )?;
        }
        Ok(())
    }
}

fn write_rect(out: &mut String, tag: &str, r: &GraspRectangle) {
    out.push_str(tag);
    for v in r.vertices() {
        let _ = write!(out, " {} {}", v.row, v.col);
    }
    out.push('\n');
}

fn check_version(dir: &Path) -> Result<bool> {
    let path = dir.join("VERSION");
    match std::fs::read_to_string(&path) {
        Ok(text) if text.trim() == version_line() => Ok(true),
        Ok(text) => Err(Error::Version(format!(
            "{} holds `{}`, expected `{}`",
            path.display(),
            text.trim(),
            version_line()
        ))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Converts a raw Cornell directory into a cache. Re-running over an
/// existing cache rewrites identical bytes.
pub fn convert(raw_dir: &Path, out_dir: &Path) -> Result<ConvertSummary> {
    let scenes = discover(raw_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    check_version(out_dir)?;
    let mut summary = ConvertSummary::default();
    let mut index = format!("# {}\n", version_line());
    for raw in &scenes {
        let (scene, pos, neg) = load_raw_scene(raw)?;
        let png = out_dir.join(format!("{}r.png", scene.id));
        std::fs::copy(&raw.rgb, &png).map_err(|e| Error::io(&png, e))?;
        save_array(
            &out_dir.join(format!("{}d.grsp", scene.id)),
            &grid_to_array(&scene.depth),
        )?;
        let (h, w) = scene.shape();
        let _ = writeln!(index, "scene {} {h} {w}", scene.id);
        for r in &scene.positives {
            write_rect(&mut index, "pos", r);
        }
        for r in &scene.negatives {
            write_rect(&mut index, "neg", r);
        }
        summary.scenes += 1;
        summary.positives += scene.positives.len();
        summary.negatives += scene.negatives.len();
        summary.skipped_nan += pos.skipped_nan + neg.skipped_nan;
        summary.skewed += pos.skewed + neg.skewed;
        log::debug!("converted {}", scene.id);
    }
    let idx = out_dir.join("index.txt");
    std::fs::write(&idx, index).map_err(|e| Error::io(&idx, e))?;
    let ver = out_dir.join("VERSION");
    std::fs::write(&ver, format!("{}\n", version_line())).map_err(|e| Error::io(&ver, e))?;
    Ok(summary)
}

#[derive(Clone, Debug, Default)]
struct IndexEntry {
    shape: (usize, usize),
    positives: Vec<GraspRectangle>,
    negatives: Vec<GraspRectangle>,
}

/// Scenes read lazily from a cache directory.
#[derive(Clone, Debug)]
pub struct CacheSource {
    dir: PathBuf,
    index: BTreeMap<String, IndexEntry>,
}

impl CacheSource {
    pub fn open(dir: &Path) -> Result<Self> {
        if !check_version(dir)? {
            return Err(Error::MissingFiles(vec![format!("{}/VERSION", dir.display())]));
        }
        let path = dir.join("index.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut index = BTreeMap::new();
        let mut current: Option<(String, IndexEntry)> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.first().copied() {
                None | Some("#") => {}
                Some(tag) if tag.starts_with('#') => {}
                Some("scene") => {
                    if parts.len() != 4 {
                        return Err(Error::parse(&path, line_no, "expected `scene <id> <rows> <cols>`"));
                    }
                    let dim = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| Error::parse(&path, line_no, format!("bad dimension `{s}`")))
                    };
                    if let Some((id, e)) = current.take() {
                        index.insert(id, e);
                    }
                    current = Some((
                        parts[1].to_string(),
                        IndexEntry {
                            shape: (dim(parts[2])?, dim(parts[3])?),
                            ..Default::default()
                        },
                    ));
                }
                Some(tag @ ("pos" | "neg")) => {
                    let Some((_, entry)) = current.as_mut() else {
                        return Err(Error::parse(&path, line_no, "rectangle before any scene"));
                    };
                    let nums: Vec<f64> = parts[1..]
                        .iter()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::parse(&path, line_no, "bad coordinate"))?;
                    if nums.len() != 8 {
                        return Err(Error::parse(&path, line_no, "expected 8 coordinates"));
                    }
                    let v = [0, 1, 2, 3].map(|k| Point2::new(nums[2 * k], nums[2 * k + 1]));
                    let rect = GraspRectangle::new(v).map_err(|e| Error::parse(&path, line_no, e.to_string()))?;
                    if tag == "pos" {
                        entry.positives.push(rect);
                    } else {
                        entry.negatives.push(rect);
                    }
                }
                Some(other) => return Err(Error::parse(&path, line_no, format!("unknown record `{other}`"))),
            }
        }
        if let Some((id, e)) = current.take() {
            index.insert(id, e);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            index,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn positives(&self, id: &str) -> Option<&[GraspRectangle]> {
        self.index.get(id).map(|e| e.positives.as_slice())
    }

    /// Scene, positive and negative totals from the index alone.
    pub fn totals(&self) -> (usize, usize, usize) {
        let pos = self.index.values().map(|e| e.positives.len()).sum();
        let neg = self.index.values().map(|e| e.negatives.len()).sum();
        (self.index.len(), pos, neg)
    }
}

impl SceneSource for CacheSource {
    fn ids(&self) -> Vec<String> {
        self.index.keys().cloned().collect()
    }

    fn load(&self, id: &str) -> Result<SceneRecord> {
        let entry = self.index.get(id).ok_or_else(|| Error::InvalidScene {
            id: id.to_string(),
            msg: "not in cache index".into(),
        })?;
        let png = self.dir.join(format!("{id}r.png"));
        let rgb = image::open(&png)
            .map_err(|e| Error::Decode {
                path: png.clone(),
                msg: e.to_string(),
            })?
            .to_rgb8();
        let dpath = self.dir.join(format!("{id}d.grsp"));
        let depth = array_to_grid(&load_array(&dpath)?, &dpath)?;
        if depth.shape() != entry.shape {
            return Err(Error::InvalidScene {
                id: id.to_string(),
                msg: format!("depth is {:?}, index says {:?}", depth.shape(), entry.shape),
            });
        }
        SceneRecord::new(id, rgb, depth, entry.positives.clone(), entry.negatives.clone())
    }
}
