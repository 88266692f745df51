//! Synthetic tabletop scenes: one bar-shaped object per image with
//! positive grasps across the bar and negatives along it. Used for tests,
//! demos and smoke runs when the real dataset is not at hand.

use std::path::Path;

use grasp_core::geometry::{jaw_axis, opening_axis};
use grasp_core::{normalize_angle, split::derive_seed, Grid, ImageGrasp, Point2};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{format_pcd, format_rects, SceneRecord};
use crate::{Error, Result};

pub const TABLE_DEPTH: f64 = 0.9;
pub const OBJECT_DEPTH: f64 = 0.84;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub rows: usize,
    pub cols: usize,
    /// Bar length range in pixels.
    pub length: (f64, f64),
    /// Bar thickness range in pixels.
    pub thickness: (f64, f64),
    pub positives: usize,
    pub negatives: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            rows: 480,
            cols: 640,
            length: (90.0, 150.0),
            thickness: (24.0, 40.0),
            positives: 5,
            negatives: 3,
        }
    }
}

impl SynthConfig {
    /// Scaled-down scenes for fast tests.
    pub fn small(rows: usize, cols: usize) -> Self {
        let s = rows.min(cols) as f64 / 480.0;
        Self {
            rows,
            cols,
            length: (90.0 * s, 150.0 * s),
            thickness: (24.0 * s, 40.0 * s),
            ..Self::default()
        }
    }
}

/// Scene ids in the Cornell naming scheme, starting at `pcd0100`.
pub fn scene_id(i: usize) -> String {
    format!("pcd{:04}", 100 + i)
}

pub fn synth_scene(id: &str, cfg: &SynthConfig, seed: u64) -> Result<SceneRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, id));
    let (h, w) = (cfg.rows as f64, cfg.cols as f64);
    let len = rng.random_range(cfg.length.0..=cfg.length.1);
    let thick = rng.random_range(cfg.thickness.0..=cfg.thickness.1);
    let psi = normalize_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
    let margin = len / 2.0 + 2.0;
    let center = Point2::new(
        rng.random_range((h / 2.0 - h / 8.0).max(margin)..=(h / 2.0 + h / 8.0).min(h - margin).max(margin)),
        rng.random_range((w / 2.0 - w / 8.0).max(margin)..=(w / 2.0 + w / 8.0).min(w - margin).max(margin)),
    );
    let (along, across) = (jaw_axis(psi), opening_axis(psi));
    let inside = |p: Point2| {
        let d = p - center;
        d.dot(along).abs() <= len / 2.0 && d.dot(across).abs() <= thick / 2.0
    };
    let color = [
        rng.random_range(150..=255u8),
        rng.random_range(20..=120u8),
        rng.random_range(20..=200u8),
    ];
    let mut noise = || rng.random_range(0..12u8);
    let mut depth = Grid::filled(cfg.rows, cfg.cols, TABLE_DEPTH);
    let mut rgb = RgbImage::new(cfg.cols as u32, cfg.rows as u32);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let p = Point2::new(r as f64 + 0.5, c as f64 + 0.5);
            let px = if inside(p) {
                depth[(r, c)] = OBJECT_DEPTH;
                color
            } else {
                let n = noise();
                [90 + n, 85 + n, 80 + n]
            };
            rgb.put_pixel(c as u32, r as u32, Rgb(px));
        }
    }
    let jaw = (thick * 0.6).max(2.0);
    let positives = (0..cfg.positives)
        .map(|i| {
            let t = if cfg.positives > 1 {
                (i as f64 / (cfg.positives - 1) as f64 - 0.5) * (len - jaw) * 0.8
            } else {
                0.0
            };
            ImageGrasp::new(center + along * t, psi, thick * 1.5, 1.0)?.to_rect(jaw)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let negatives = (0..cfg.negatives)
        .map(|i| {
            let t = (i as f64 - (cfg.negatives as f64 - 1.0) / 2.0) * thick * 0.3;
            ImageGrasp::new(
                center + across * t,
                normalize_angle(psi + std::f64::consts::FRAC_PI_2),
                len * 0.5,
                1.0,
            )?
            .to_rect(jaw)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    SceneRecord::new(id, rgb, depth, positives, negatives)
}

pub fn synth_scenes(n: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<SceneRecord>> {
    (0..n).map(|i| synth_scene(&scene_id(i), cfg, seed)).collect()
}

/// Writes scenes in the raw Cornell layout so they can go through
/// `convert` like the real dataset.
pub fn write_raw(dir: &Path, scenes: &[SceneRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for s in scenes {
        let base = dir.join(&s.id);
        let with = |suffix: &str| base.with_file_name(format!("{}{suffix}", s.id));
        let png = with("r.png");
        s.rgb.save(&png).map_err(|e| Error::Decode {
            path: png.clone(),
            msg: e.to_string(),
        })?;
        for (path, text) in [
            (with(".txt"), format_pcd(&s.depth)),
            (with("cpos.txt"), format_rects(&s.positives)),
            (with("cneg.txt"), format_rects(&s.negatives)),
        ] {
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{discover, load_raw_scene};

    #[test]
    fn positives_cross_the_object() {
        let cfg = SynthConfig::small(96, 128);
        let s = synth_scene("pcd0100", &cfg, 1).unwrap();
        assert_eq!(s.positives.len(), cfg.positives);
        assert_eq!(s.negatives.len(), cfg.negatives);
        for r in &s.positives {
            let c = r.center();
            assert_eq!(s.depth[(c.row as usize, c.col as usize)], OBJECT_DEPTH);
            assert!(r.is_well_formed());
        }
    }

    #[test]
    fn scenes_are_seeded_per_id() {
        let cfg = SynthConfig::small(64, 64);
        assert_eq!(
            synth_scene("pcd0100", &cfg, 4).unwrap(),
            synth_scene("pcd0100", &cfg, 4).unwrap()
        );
        assert_ne!(
            synth_scene("pcd0100", &cfg, 4).unwrap(),
            synth_scene("pcd0101", &cfg, 4).unwrap()
        );
    }

    #[test]
    fn raw_layout_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = synth_scenes(2, &SynthConfig::small(48, 64), 2).unwrap();
        write_raw(dir.path(), &scenes).unwrap();
        let raw = discover(dir.path()).unwrap();
        assert_eq!(raw.len(), 2);
        let (back, _, _) = load_raw_scene(&raw[0]).unwrap();
        assert_eq!(back.rgb, scenes[0].rgb);
        assert_eq!(back.positives.len(), scenes[0].positives.len());
        for (a, b) in back.depth.as_slice().iter().zip(scenes[0].depth.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
