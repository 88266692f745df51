//! Independent reference implementations used only by tests.
#![allow(dead_code)]

use grasp_core::{GraspRectangle, ImageGrasp, Point2};
use rand::Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn shoelace(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].cross(poly[(i + 1) % n])).sum::<f64>() * 0.5
}

/// Sutherland-Hodgman clip of `subject` against the convex polygon `clip`.
fn clip_polygon(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let orient = shoelace(clip).signum();
    let inside = |a: Point2, b: Point2, p: Point2| orient * (b - a).cross(p - a) >= 0.0;
    let intersect = |a: Point2, b: Point2, p: Point2, q: Point2| {
        let (r, s) = (b - a, q - p);
        let t = (p - a).cross(s) / r.cross(s);
        a + r * t
    };
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            match (inside(a, b, p), inside(a, b, q)) {
                (true, true) => out.push(q),
                (true, false) => out.push(intersect(p, q, a, b)),
                (false, true) => {
                    out.push(intersect(p, q, a, b));
                    out.push(q);
                }
                (false, false) => {}
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

/// Exact area IOU of two convex quadrilaterals.
pub fn exact_iou(a: &GraspRectangle, b: &GraspRectangle) -> f64 {
    let (pa, pb) = (a.vertices().to_vec(), b.vertices().to_vec());
    let inter = shoelace(&clip_polygon(&pa, &pb)).abs();
    let union = shoelace(&pa).abs() + shoelace(&pb).abs() - inter;
    inter / union
}

/// Grasp with the given geometry; panics on invalid input.
pub fn grasp(row: f64, col: f64, angle: f64, width: f64) -> ImageGrasp {
    ImageGrasp::new(Point2::new(row, col), angle, width, 1.0).unwrap()
}

pub fn random_angle<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(-FRAC_PI_2..FRAC_PI_2)
}

/// Random rectangle with both sides in `[10, 60]` px, so area is at least 100 px².
pub fn random_rect<R: Rng>(rng: &mut R, center: Point2) -> GraspRectangle {
    let w = rng.random_range(10.0..60.0);
    let h = rng.random_range(10.0..60.0);
    ImageGrasp::new(center, random_angle(rng), w, 1.0)
        .unwrap()
        .to_rect(h)
        .unwrap()
}

/// A pair of rectangles whose centers are close enough to overlap often.
pub fn random_pair<R: Rng>(rng: &mut R) -> (GraspRectangle, GraspRectangle) {
    let c = Point2::new(rng.random_range(60.0..140.0), rng.random_range(60.0..140.0));
    let d = Point2::new(rng.random_range(-25.0..25.0), rng.random_range(-25.0..25.0));
    (random_rect(rng, c), random_rect(rng, c + d))
}

/// Index of the nearest row by a plain scan; ties keep the first row.
pub fn brute_nearest(rows: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, r) in rows.iter().enumerate() {
        let d: f64 = r.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

/// Central difference of `f` along coordinate `i`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut p = x.to_vec();
    p[i] += h;
    let up = f(&p);
    p[i] -= 2.0 * h;
    (up - f(&p)) / (2.0 * h)
}

/// Relative error with an absolute floor for values near zero.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn angle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}
