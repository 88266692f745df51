//! Pixel-wise grasp maps: encoding ground-truth rectangles into training
//! targets and decoding network output back into grasps.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{angle_from_components, jaw_axis, opening_axis, GraspRectangle, ImageGrasp, Point2};
use crate::{Error, Grid, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Width in pixels that maps to a normalized width of 1.
pub const DEFAULT_MAX_WIDTH: f64 = 150.0;

/// Fraction of the opening axis (centered) that is marked as graspable.
pub const QUALITY_REGION_FRACTION: f64 = 1.0 / 3.0;

/// Quality, angle and width maps over an `h x w` image.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspMapSet {
    /// Grasp quality in `[0, 1]`.
    pub quality: Grid<f64>,
    /// `sin 2psi` in `[-1, 1]`.
    pub sin2: Grid<f64>,
    /// `cos 2psi` in `[-1, 1]`.
    pub cos2: Grid<f64>,
    /// Width divided by the maximum width.
    pub width: Grid<f64>,
}

impl GraspMapSet {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let z = Grid::filled(rows, cols, 0.0);
        Self {
            quality: z.clone(),
            sin2: z.clone(),
            cos2: z.clone(),
            width: z,
        }
    }

    pub fn new(quality: Grid<f64>, sin2: Grid<f64>, cos2: Grid<f64>, width: Grid<f64>) -> Result<Self> {
        let shape = quality.shape();
        for g in [&sin2, &cos2, &width] {
            if g.shape() != shape {
                return Err(Error::Shape {
                    expected: shape,
                    found: g.shape(),
                });
            }
        }
        Ok(Self {
            quality,
            sin2,
            cos2,
            width,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.quality.shape()
    }

    pub fn heads(&self) -> [&Grid<f64>; 4] {
        [&self.quality, &self.sin2, &self.cos2, &self.width]
    }

    /// Checks the elementwise bounds of the quality and angle maps.
    pub fn within_bounds(&self) -> bool {
        let in_range = |g: &Grid<f64>, lo: f64, hi: f64| g.as_slice().iter().all(|v| (lo..=hi).contains(v));
        in_range(&self.quality, 0.0, 1.0) && in_range(&self.sin2, -1.0, 1.0) && in_range(&self.cos2, -1.0, 1.0)
    }
}

/// Rasterizes positive rectangles into target maps.
///
/// The central third of each rectangle along its opening axis (full jaw
/// height) receives quality 1 and the rectangle's angle and normalized
/// width. Later rectangles overwrite earlier ones where they overlap.
pub fn encode_target_maps(rects: &[GraspRectangle], rows: usize, cols: usize, max_width: f64) -> Result<GraspMapSet> {
    if !(max_width > 0.0) {
        return Err(Error::InvalidInput("max width must be positive"));
    }
    let mut maps = GraspMapSet::zeros(rows, cols);
    for rect in rects {
        let g = rect.to_image_grasp()?;
        let half_len = 0.5 * g.width * QUALITY_REGION_FRACTION;
        let half_jaw = 0.5 * rect.jaw_height();
        let axis = opening_axis(g.angle);
        let jaw = jaw_axis(g.angle);
        let values = (
            (2.0 * g.angle).sin(),
            (2.0 * g.angle).cos(),
            (g.width / max_width).clamp(0.0, 1.0),
        );

        let reach = half_len + half_jaw + 1.0;
        let r0 = (g.center.row - reach).floor().max(0.0) as usize;
        let c0 = (g.center.col - reach).floor().max(0.0) as usize;
        let r1 = ((g.center.row + reach).ceil().max(0.0) as usize).min(rows);
        let c1 = ((g.center.col + reach).ceil().max(0.0) as usize).min(cols);

        let mut touched = false;
        for r in r0..r1 {
            for c in c0..c1 {
                let d = Point2::new(r as f64 + 0.5, c as f64 + 0.5) - g.center;
                if d.dot(axis).abs() <= half_len && d.dot(jaw).abs() <= half_jaw {
                    write_pixel(&mut maps, r, c, values);
                    touched = true;
                }
            }
        }
        // thin rectangles still mark the pixel holding their center
        if !touched && g.center.row >= 0.0 && g.center.col >= 0.0 {
            let (r, c) = (g.center.row as usize, g.center.col as usize);
            if r < rows && c < cols {
                write_pixel(&mut maps, r, c, values);
            }
        }
    }
    Ok(maps)
}

fn write_pixel(maps: &mut GraspMapSet, r: usize, c: usize, (s, co, w): (f64, f64, f64)) {
    maps.quality[(r, c)] = 1.0;
    maps.sin2[(r, c)] = s;
    maps.cos2[(r, c)] = co;
    maps.width[(r, c)] = w;
}

/// Peak extraction settings for [`decode_grasps_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeOptions {
    /// Gaussian smoothing applied to the quality map; 0 disables smoothing.
    pub sigma: f64,
    /// Peaks closer than this (Chebyshev distance, pixels) to a stronger
    /// peak are suppressed.
    pub min_distance: usize,
    pub max_width: f64,
    /// Connected pixels within this fraction of a peak's smoothed value form
    /// its plateau; the grasp is placed at the plateau centroid.
    pub plateau_tolerance: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            min_distance: 10,
            max_width: DEFAULT_MAX_WIDTH,
            plateau_tolerance: 0.02,
        }
    }
}

/// Decodes up to `k` grasps with [`DecodeOptions::default`].
pub fn decode_grasps(maps: &GraspMapSet, k: usize) -> Vec<ImageGrasp> {
    decode_grasps_with(maps, k, &DecodeOptions::default())
}

/// Finds up to `k` grasps at local maxima of the smoothed quality map,
/// strongest smoothed peak first.
///
/// Ties between peaks are broken by `(row, col)` order. A flat quality map yields a single
/// grasp at pixel `(0, 0)`. Angle and width are read from the raw maps at the
/// peak pixel; an undefined angle decodes as 0.
pub fn decode_grasps_with(maps: &GraspMapSet, k: usize, opts: &DecodeOptions) -> Vec<ImageGrasp> {
    let (rows, cols) = maps.shape();
    if k == 0 || rows == 0 || cols == 0 {
        return Vec::new();
    }
    let q = if opts.sigma > 0.0 {
        gaussian_blur(&maps.quality, opts.sigma)
    } else {
        maps.quality.clone()
    };

    let qs = q.as_slice();
    let (lo, hi) = qs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if lo == hi {
        return vec![grasp_at(maps, 0, 0, opts.max_width)];
    }

    let mut peaks: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = q[(r, c)];
            if is_local_max(&q, r, c, v) {
                peaks.push((v, r, c));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    // A wide target region stays a near-flat ridge after the blur, so the
    // top of each peak is consumed whole and reported at its centroid.
    let mut consumed = vec![false; rows * cols];
    let mut chosen: Vec<((usize, usize), Point2)> = Vec::new();
    for &(v, r, c) in &peaks {
        if chosen.len() == k {
            break;
        }
        if consumed[r * cols + c] {
            continue;
        }
        let close = chosen
            .iter()
            .any(|&((pr, pc), _)| r.abs_diff(pr).max(c.abs_diff(pc)) < opts.min_distance);
        if close {
            continue;
        }
        let plateau = flood_plateau(&q, r, c, v - opts.plateau_tolerance * v.abs(), &mut consumed);
        chosen.push(plateau_center(&plateau));
    }
    // Ranked by smoothed quality, so the first `k` never depends on `k`.
    chosen
        .into_iter()
        .map(|((r, c), center)| ImageGrasp {
            center,
            ..grasp_at(maps, r, c, opts.max_width)
        })
        .collect()
}

/// Unconsumed 8-connected pixels reachable from `(r, c)` with value at
/// least `floor`, marked consumed.
fn flood_plateau(q: &Grid<f64>, r: usize, c: usize, floor: f64, consumed: &mut [bool]) -> Vec<(usize, usize)> {
    let (rows, cols) = q.shape();
    let mut out = Vec::new();
    let mut stack = vec![(r, c)];
    consumed[r * cols + c] = true;
    while let Some((pr, pc)) = stack.pop() {
        out.push((pr, pc));
        for nr in pr.saturating_sub(1)..=(pr + 1).min(rows - 1) {
            for nc in pc.saturating_sub(1)..=(pc + 1).min(cols - 1) {
                let i = nr * cols + nc;
                if !consumed[i] && q[(nr, nc)] >= floor {
                    consumed[i] = true;
                    stack.push((nr, nc));
                }
            }
        }
    }
    out
}

/// Centroid of the plateau and the member pixel nearest to it.
fn plateau_center(pixels: &[(usize, usize)]) -> ((usize, usize), Point2) {
    let n = pixels.len() as f64;
    let (sr, sc) = pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
    let centroid = Point2::new(sr / n + 0.5, sc / n + 0.5);
    let mut sorted = pixels.to_vec();
    sorted.sort_unstable();
    let nearest = sorted
        .into_iter()
        .map(|(r, c)| ((r, c), (Point2::new(r as f64 + 0.5, c as f64 + 0.5) - centroid).norm()))
        .fold(
            ((0, 0), f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
        .0;
    (nearest, centroid)
}

fn is_local_max(q: &Grid<f64>, r: usize, c: usize, v: f64) -> bool {
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 {
                continue;
            }
            if let Some(&n) = q.get(nr as usize, nc as usize) {
                if n > v {
                    return false;
                }
            }
        }
    }
    true
}

fn grasp_at(maps: &GraspMapSet, r: usize, c: usize, max_width: f64) -> ImageGrasp {
    let angle = angle_from_components(maps.sin2[(r, c)], maps.cos2[(r, c)]).unwrap_or(0.0);
    let quality = maps.quality[(r, c)];
    let quality = if quality.is_nan() { 0.0 } else { quality.clamp(0.0, 1.0) };
    let width = maps.width[(r, c)];
    let width = if width.is_nan() {
        0.0
    } else {
        width.clamp(0.0, 1.0) * max_width
    };
    ImageGrasp {
        center: Point2::new(r as f64 + 0.5, c as f64 + 0.5),
        angle,
        width,
        quality,
    }
}

/// Separable Gaussian blur with edge replication; kernel radius `ceil(3 sigma)`.
pub fn gaussian_blur(src: &Grid<f64>, sigma: f64) -> Grid<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (rows, cols) = src.shape();
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let horizontal = Grid::from_fn(rows, cols, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(j, w)| w * src[(r, clamp(c as i64 + j as i64 - radius, cols))])
            .sum::<f64>()
    });
    Grid::from_fn(rows, cols, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(j, w)| w * horizontal[(clamp(r as i64 + j as i64 - radius, rows), c)])
            .sum::<f64>()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_offset_deg;
    use core::f64::consts::FRAC_PI_4;

    fn grasp_rect(row: f64, col: f64, angle: f64, width: f64, jaw: f64) -> GraspRectangle {
        ImageGrasp::new(Point2::new(row, col), angle, width, 1.0)
            .unwrap()
            .to_rect(jaw)
            .unwrap()
    }

    #[test]
    fn empty_list_gives_zero_maps() {
        let m = encode_target_maps(&[], 224, 224, DEFAULT_MAX_WIDTH).unwrap();
        assert_eq!(m.shape(), (224, 224));
        for head in m.heads() {
            assert!(head.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn angle_zero_region_values() {
        let m = encode_target_maps(&[grasp_rect(30.0, 30.0, 0.0, 30.0, 10.0)], 64, 64, DEFAULT_MAX_WIDTH).unwrap();
        let inside: Vec<usize> = (0..64 * 64).filter(|&i| m.quality.as_slice()[i] == 1.0).collect();
        assert!(!inside.is_empty());
        for i in inside {
            assert_eq!(m.sin2.as_slice()[i], 0.0);
            assert_eq!(m.cos2.as_slice()[i], 1.0);
            assert!((m.width.as_slice()[i] - 30.0 / 150.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_pi_region_values() {
        let m = encode_target_maps(
            &[grasp_rect(30.0, 30.0, FRAC_PI_4, 30.0, 10.0)],
            64,
            64,
            DEFAULT_MAX_WIDTH,
        )
        .unwrap();
        let mut count = 0;
        for i in 0..64 * 64 {
            if m.quality.as_slice()[i] == 1.0 {
                count += 1;
                assert!((m.sin2.as_slice()[i] - 1.0).abs() < 1e-12);
                assert!(m.cos2.as_slice()[i].abs() < 1e-12);
            }
        }
        assert!(count > 0);
    }

    #[test]
    fn central_third_extent() {
        // width 30 along columns: central third spans 10 columns, jaw spans 10 rows
        let m = encode_target_maps(&[grasp_rect(30.0, 30.0, 0.0, 30.0, 10.0)], 64, 64, DEFAULT_MAX_WIDTH).unwrap();
        let count = m.quality.as_slice().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(count, 100);
    }

    #[test]
    fn later_rectangles_overwrite() {
        let a = grasp_rect(30.0, 30.0, 0.0, 30.0, 10.0);
        let b = grasp_rect(30.0, 30.0, FRAC_PI_4, 30.0, 10.0);
        let m = encode_target_maps(&[a, b], 64, 64, DEFAULT_MAX_WIDTH).unwrap();
        assert!((m.sin2[(30, 30)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectangles_are_clipped_to_bounds() {
        let m = encode_target_maps(&[grasp_rect(2.0, 2.0, 0.3, 60.0, 20.0)], 16, 16, DEFAULT_MAX_WIDTH).unwrap();
        assert!(m.quality[(2, 2)] == 1.0);
    }

    #[test]
    fn single_rect_round_trip() {
        let src = ImageGrasp::new(Point2::new(40.3, 50.8), 0.4, 42.0, 1.0).unwrap();
        let m = encode_target_maps(&[src.to_rect(20.0).unwrap()], 96, 96, DEFAULT_MAX_WIDTH).unwrap();
        let out = decode_grasps(&m, 1);
        assert_eq!(out.len(), 1);
        let g = out[0];
        assert!((g.center - src.center).norm() <= 2.0, "{:?}", g.center);
        assert!(angle_offset_deg(g.angle, src.angle) <= 2.0);
        assert!((g.width - src.width).abs() <= 0.05 * src.width);
        assert_eq!(g.quality, 1.0);
    }

    #[test]
    fn all_zero_quality_uses_tie_break_pixel() {
        let m = GraspMapSet::zeros(32, 32);
        let out = decode_grasps(&m, 3);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].center, Point2::new(0.5, 0.5));
        assert_eq!(out[0].quality, 0.0);
        assert_eq!(out[0].angle, 0.0);
        assert_eq!(out[0].width, 0.0);
    }

    #[test]
    fn two_disjoint_rectangles_give_one_peak_each() {
        let a = grasp_rect(20.0, 20.0, 0.0, 30.0, 12.0);
        let b = grasp_rect(70.0, 75.0, -0.7, 36.0, 14.0);
        let m = encode_target_maps(&[a, b], 100, 100, DEFAULT_MAX_WIDTH).unwrap();
        let out = decode_grasps(&m, 2);
        assert_eq!(out.len(), 2);
        let near = |g: &ImageGrasp, r: &GraspRectangle| (g.center - r.center()).norm() <= 2.0;
        assert!(out.iter().any(|g| near(g, &a)));
        assert!(out.iter().any(|g| near(g, &b)));
    }

    #[test]
    fn blur_preserves_constant() {
        let g = Grid::filled(9, 7, 0.25);
        let b = gaussian_blur(&g, 2.0);
        assert!(b.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Grid::filled(2, 2, 0.0);
        let b = Grid::filled(2, 3, 0.0);
        assert!(matches!(
            GraspMapSet::new(a.clone(), a.clone(), a, b),
            Err(Error::Shape { .. })
        ));
    }
}
