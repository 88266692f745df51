//! Four-panel prediction rendering: an RGB overlay with grasp rectangles
//! plus quality, angle and width heatmaps.
//!
//! Heatmaps use a fixed linear colormap from [`COLOR_LOW`] (value 0) to
//! [`COLOR_HIGH`] (value 1). Quality is drawn on `[0, 1]`, angle on
//! `[-90°, 90°)` and width on `[0, 1]` of the normalized width.

use std::path::{Path, PathBuf};

use grasp_core::{angle_from_components, GraspMapSet, GraspRectangle, Grid, Point2};
use image::{Rgb, RgbImage};

use crate::{Error, Result};

pub const COLOR_LOW: [u8; 3] = [20, 24, 82];
pub const COLOR_HIGH: [u8; 3] = [250, 220, 40];
pub const PREDICTION_COLOR: [u8; 3] = [230, 30, 30];
pub const TRUTH_COLOR: [u8; 3] = [30, 200, 60];

/// Output file names, in write order.
pub const FILES: [&str; 4] = ["overlay.png", "quality.png", "angle.png", "width.png"];

pub fn colormap(t: f64) -> Rgb<u8> {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    Rgb(std::array::from_fn(|k| {
        (COLOR_LOW[k] as f64 + t * (COLOR_HIGH[k] as f64 - COLOR_LOW[k] as f64)).round() as u8
    }))
}

/// Maps `[lo, hi]` linearly onto the colormap.
pub fn heatmap(g: &Grid<f64>, lo: f64, hi: f64) -> RgbImage {
    let (h, w) = g.shape();
    RgbImage::from_fn(w as u32, h as u32, |c, r| {
        colormap((g[(r as usize, c as usize)] - lo) / (hi - lo))
    })
}

fn draw_line(img: &mut RgbImage, a: Point2, b: Point2, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    let steps = ((b - a).norm().ceil() as usize).max(1) * 2;
    for i in 0..=steps {
        let p = a + (b - a) * (i as f64 / steps as f64);
        let (r, c) = (p.row.floor(), p.col.floor());
        if r >= 0.0 && c >= 0.0 && (r as u32) < h && (c as u32) < w {
            img.put_pixel(c as u32, r as u32, color);
        }
    }
}

pub fn draw_rect(img: &mut RgbImage, rect: &GraspRectangle, color: Rgb<u8>) {
    let v = rect.vertices();
    for i in 0..4 {
        draw_line(img, v[i], v[(i + 1) % 4], color);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VizImages {
    pub overlay: RgbImage,
    pub quality: RgbImage,
    pub angle: RgbImage,
    pub width: RgbImage,
}

impl VizImages {
    pub fn panels(&self) -> [&RgbImage; 4] {
        [&self.overlay, &self.quality, &self.angle, &self.width]
    }
}

/// Renders the panels. `rgb` must match the map size; `truth` rectangles
/// are drawn under the `predicted` ones.
pub fn render(
    rgb: &RgbImage,
    maps: &GraspMapSet,
    predicted: &[GraspRectangle],
    truth: &[GraspRectangle],
) -> Result<VizImages> {
    let (h, w) = maps.shape();
    if rgb.dimensions() != (w as u32, h as u32) {
        return Err(Error::Shape(format!(
            "image is {}x{} but maps are {h}x{w}",
            rgb.height(),
            rgb.width()
        )));
    }
    let mut overlay = rgb.clone();
    for r in truth {
        draw_rect(&mut overlay, r, Rgb(TRUTH_COLOR));
    }
    for r in predicted {
        draw_rect(&mut overlay, r, Rgb(PREDICTION_COLOR));
    }
    let angle = Grid::from_fn(h, w, |r, c| {
        angle_from_components(maps.sin2[(r, c)], maps.cos2[(r, c)]).unwrap_or(0.0)
    });
    let half = std::f64::consts::FRAC_PI_2;
    Ok(VizImages {
        overlay,
        quality: heatmap(&maps.quality, 0.0, 1.0),
        angle: heatmap(&angle, -half, half),
        width: heatmap(&maps.width, 0.0, 1.0),
    })
}

/// Writes the four PNG files into `dir` and returns their paths.
pub fn write_viz(dir: &Path, images: &VizImages) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    FILES
        .iter()
        .zip(images.panels())
        .map(|(name, img)| {
            let p = dir.join(name);
            img.save(&p).map_err(|e| Error::Decode {
                path: p.clone(),
                msg: e.to_string(),
            })?;
            Ok(p)
        })
        .collect()
}
