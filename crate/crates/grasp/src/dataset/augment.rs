//! Similarity-transform augmentation: rotate, zoom and crop a scene,
//! resampling pixels bilinearly and carrying the rectangles along.

use grasp_core::augment::{AugmentRanges, Similarity};
use grasp_core::{split::derive_seed, GraspRectangle, Grid, Point2};
use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SceneRecord;
use crate::Result;

/// Attempts before falling back to an unaugmented crop.
pub const MAX_RESAMPLES: usize = 10;

#[derive(Clone, Debug)]
pub struct Augmented {
    pub scene: SceneRecord,
    /// Maps original pixel coordinates into the crop.
    pub transform: Similarity,
    /// Number of transforms drawn.
    pub attempts: usize,
    /// True when every draw lost all positives and a plain crop was used.
    pub fallback: bool,
}

fn bilinear_weights(p: Point2) -> (i64, i64, f64, f64) {
    // pixel centers sit at integer + 0.5
    let (y, x) = (p.row - 0.5, p.col - 0.5);
    let (r0, c0) = (y.floor(), x.floor());
    (r0 as i64, c0 as i64, y - r0, x - c0)
}

fn sample_rgb(img: &RgbImage, p: Point2) -> Rgb<u8> {
    let (w, h) = img.dimensions();
    let (r0, c0, fy, fx) = bilinear_weights(p);
    let mut acc = [0.0f64; 3];
    for (dr, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dc, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (r, c) = (r0 + dr, c0 + dc);
            if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                continue;
            }
            let px = img.get_pixel(c as u32, r as u32);
            for k in 0..3 {
                acc[k] += wy * wx * px[k] as f64;
            }
        }
    }
    Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8))
}

/// Bilinear over valid (positive) neighbours only; 0 when none.
fn sample_depth(depth: &Grid<f64>, p: Point2) -> f64 {
    let (h, w) = depth.shape();
    let (r0, c0, fy, fx) = bilinear_weights(p);
    let (mut sum, mut wsum) = (0.0, 0.0);
    for (dr, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dc, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (r, c) = (r0 + dr, c0 + dc);
            if r < 0 || c < 0 || r >= h as i64 || c >= w as i64 {
                continue;
            }
            let v = depth[(r as usize, c as usize)];
            if v > 0.0 && v.is_finite() && wy * wx > 0.0 {
                sum += wy * wx * v;
                wsum += wy * wx;
            }
        }
    }
    if wsum > 0.0 {
        sum / wsum
    } else {
        0.0
    }
}

fn keep_inside(rects: &[GraspRectangle], t: &Similarity, size: usize) -> Result<Vec<GraspRectangle>> {
    let lim = size as f64;
    let mut out = Vec::new();
    for r in rects {
        let m = t.apply_rect(r)?;
        let c = m.center();
        if c.row >= 0.0 && c.col >= 0.0 && c.row < lim && c.col < lim {
            out.push(m);
        }
    }
    Ok(out)
}

/// Resamples `scene` through `t` into a `size`x`size` crop. Rectangles
/// whose center leaves the crop are dropped.
pub fn warp_scene(scene: &SceneRecord, t: &Similarity, size: usize) -> Result<SceneRecord> {
    let mut rgb = RgbImage::new(size as u32, size as u32);
    let mut depth = Grid::filled(size, size, 0.0);
    for r in 0..size {
        for c in 0..size {
            let src = t.inverse_apply(Point2::new(r as f64 + 0.5, c as f64 + 0.5));
            rgb.put_pixel(c as u32, r as u32, sample_rgb(&scene.rgb, src));
            depth[(r, c)] = sample_depth(&scene.depth, src);
        }
    }
    SceneRecord::new(
        scene.id.clone(),
        rgb,
        depth,
        keep_inside(&scene.positives, t, size)?,
        keep_inside(&scene.negatives, t, size)?,
    )
}

/// Plain crop of `size`x`size` centred on `center`.
pub fn crop_about(scene: &SceneRecord, center: Point2, size: usize) -> Result<(SceneRecord, Similarity)> {
    let half = size as f64 / 2.0;
    let t = Similarity::crop(center, Point2::new(half, half));
    Ok((warp_scene(scene, &t, size)?, t))
}

/// The evaluation view: a plain crop about the object center. Whole-pixel
/// alignment keeps the crop an exact copy of source pixels.
pub fn eval_crop(scene: &SceneRecord, size: usize) -> Result<(SceneRecord, Similarity)> {
    let c = scene.object_center();
    crop_about(scene, Point2::new(c.row.round(), c.col.round()), size)
}

/// Random rotation, zoom and jittered crop, reproducible from `seed` and
/// the scene id. Draws again when no positive survives, up to
/// [`MAX_RESAMPLES`] times, then returns the plain crop.
pub fn augment(scene: &SceneRecord, ranges: &AugmentRanges, size: usize, seed: u64) -> Result<Augmented> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &scene.id));
    let center = scene.object_center();
    for attempt in 1..=MAX_RESAMPLES {
        let t = ranges.sample(&mut rng, center, size);
        let positives = keep_inside(&scene.positives, &t, size)?;
        if !positives.is_empty() || scene.positives.is_empty() {
            return Ok(Augmented {
                scene: warp_scene(scene, &t, size)?,
                transform: t,
                attempts: attempt,
                fallback: false,
            });
        }
    }
    let (crop, t) = eval_crop(scene, size)?;
    Ok(Augmented {
        scene: crop,
        transform: t,
        attempts: MAX_RESAMPLES,
        fallback: true,
    })
}
