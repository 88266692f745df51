use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{parse_rect_file, pcd_to_depth, RectFile, SceneRecord};
use crate::{Error, Result};

/// File paths of one raw Cornell scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawScene {
    pub id: String,
    pub rgb: PathBuf,
    pub cloud: PathBuf,
    pub positives: PathBuf,
    pub negatives: PathBuf,
}

const SUFFIXES: [&str; 4] = ["r.png", ".txt", "cpos.txt", "cneg.txt"];

/// Splits `pcd0100cpos.txt` into (`pcd0100`, slot 2).
fn classify(name: &str) -> Option<(String, usize)> {
    let rest = name.strip_prefix("pcd")?;
    let digits = rest.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let slot = SUFFIXES.iter().position(|s| &rest[digits..] == *s)?;
    Some((format!("pcd{}", &rest[..digits]), slot))
}

fn walk(dir: &Path, found: &mut BTreeMap<String, [Option<PathBuf>; 4]>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            walk(&path, found)?;
        } else if let Some((id, slot)) = path.file_name().and_then(|n| n.to_str()).and_then(classify) {
            found.entry(id).or_default()[slot] = Some(path);
        }
    }
    Ok(())
}

/// Finds every scene under `root` (recursively, as the archive is split
/// into numbered folders). Any scene missing one of its four files makes
/// the whole dataset incomplete.
pub fn discover(root: &Path) -> Result<Vec<RawScene>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let mut found = BTreeMap::new();
    walk(root, &mut found)?;
    if found.is_empty() {
        return Err(Error::MissingFiles(vec![format!(
            "no pcdNNNN scene files under {}",
            root.display()
        )]));
    }
    let mut missing = Vec::new();
    let mut scenes = Vec::new();
    for (id, slots) in found {
        if let [Some(rgb), Some(cloud), Some(positives), Some(negatives)] = slots {
            scenes.push(RawScene {
                id,
                rgb,
                cloud,
                positives,
                negatives,
            });
        } else {
            for (slot, suffix) in slots.iter().zip(SUFFIXES) {
                if slot.is_none() {
                    missing.push(format!("{id}{suffix}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(scenes)
}

/// Loads one raw scene; also returns the rectangle-file diagnostics for
/// positives and negatives.
pub fn load_raw_scene(raw: &RawScene) -> Result<(SceneRecord, RectFile, RectFile)> {
    let rgb = image::open(&raw.rgb)
        .map_err(|e| Error::Decode {
            path: raw.rgb.clone(),
            msg: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let depth = pcd_to_depth(&raw.cloud, (h as usize, w as usize))?;
    let pos = parse_rect_file(&raw.positives)?;
    let neg = parse_rect_file(&raw.negatives)?;
    let scene = SceneRecord::new(raw.id.clone(), rgb, depth, pos.rects.clone(), neg.rects.clone())?;
    Ok((scene, pos, neg))
}
