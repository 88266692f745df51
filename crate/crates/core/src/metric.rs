//! Rectangle success metric: a predicted grasp counts as correct when it
//! overlaps some ground-truth positive with IOU above a threshold and its
//! angle is close enough to that positive's angle.

use crate::geometry::{angle_offset_deg, GraspRectangle, ImageGrasp};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricThresholds {
    /// IOU must be strictly greater than this.
    pub iou_min: f64,
    /// Angle offset in degrees must be strictly less than this.
    pub angle_max_deg: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self {
            iou_min: 0.25,
            angle_max_deg: 30.0,
        }
    }
}

impl MetricThresholds {
    pub fn new(iou_min: f64, angle_max_deg: f64) -> Result<Self> {
        if !(iou_min > 0.0 && iou_min < 1.0) {
            return Err(Error::InvalidInput("iou_min must lie in (0, 1)"));
        }
        if !(angle_max_deg > 0.0 && angle_max_deg <= 90.0) {
            return Err(Error::InvalidInput("angle_max must lie in (0, 90]"));
        }
        Ok(Self { iou_min, angle_max_deg })
    }

    /// The decision rule applied to one (prediction, positive) pair.
    pub fn accepts(&self, iou: f64, angle_offset_deg: f64) -> bool {
        iou > self.iou_min && angle_offset_deg < self.angle_max_deg
    }
}

/// Number of pixel centers inside both, either-only and the union.
fn raster_counts(a: &GraspRectangle, b: &GraspRectangle) -> (u64, u64) {
    let (a_lo, a_hi) = a.row_bounds();
    let (b_lo, b_hi) = b.row_bounds();
    let r0 = a_lo.min(b_lo).floor() as i64 - 1;
    let r1 = a_hi.max(b_hi).ceil() as i64 + 1;

    // pixel columns whose centers fall inside the closed span
    let cols = |span: Option<(f64, f64)>| -> Option<(i64, i64)> {
        let (lo, hi) = span?;
        let first = (lo - 0.5).ceil() as i64;
        let last = (hi - 0.5).floor() as i64;
        (first <= last).then_some((first, last))
    };
    let len = |s: Option<(i64, i64)>| s.map_or(0, |(f, l)| (l - f + 1) as u64);

    let (mut inter, mut union) = (0u64, 0u64);
    for r in r0..=r1 {
        let y = r as f64 + 0.5;
        let sa = cols(a.row_span(y));
        let sb = cols(b.row_span(y));
        let both = match (sa, sb) {
            (Some((fa, la)), Some((fb, lb))) => {
                let (f, l) = (fa.max(fb), la.min(lb));
                if f <= l {
                    (l - f + 1) as u64
                } else {
                    0
                }
            }
            _ => 0,
        };
        inter += both;
        union += len(sa) + len(sb) - both;
    }
    (inter, union)
}

/// Intersection over union measured on the integer pixel grid: a pixel
/// belongs to a rectangle when its center lies inside it.
pub fn iou(a: &GraspRectangle, b: &GraspRectangle) -> Result<f64> {
    let (inter, union) = raster_counts(a, b);
    if union == 0 {
        return Err(Error::InvalidGeometry("union of rectangles covers no pixel"));
    }
    Ok(inter as f64 / union as f64)
}

/// True iff the prediction matches at least one positive rectangle.
///
/// A zero-width prediction has no rectangle and never matches.
pub fn rectangle_metric(pred: &ImageGrasp, positives: &[GraspRectangle], th: &MetricThresholds) -> Result<bool> {
    if positives.is_empty() {
        return Err(Error::InvalidInput("no positive rectangles to compare against"));
    }
    let pred_rect = match pred.to_default_rect() {
        Ok(r) => r,
        Err(Error::DegenerateGrasp) => return Ok(false),
        Err(e) => return Err(e),
    };
    for gt in positives {
        let Ok(gt_grasp) = gt.to_image_grasp() else {
            continue;
        };
        let offset = angle_offset_deg(pred.angle, gt_grasp.angle);
        if offset >= th.angle_max_deg {
            continue;
        }
        let overlap = iou(&pred_rect, gt).unwrap_or(0.0);
        if th.accepts(overlap, offset) {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use proptest::prelude::*;

    fn rect(pts: [(f64, f64); 4]) -> GraspRectangle {
        GraspRectangle::new(pts.map(|(r, c)| Point2::new(r, c))).unwrap()
    }

    fn square(r: f64, c: f64, side: f64) -> GraspRectangle {
        rect([(r, c), (r, c + side), (r + side, c + side), (r + side, c)])
    }

    #[test]
    fn identical_is_one() {
        let a = square(3.0, 4.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(iou(&square(0.0, 0.0, 10.0), &square(50.0, 50.0, 10.0)).unwrap(), 0.0);
    }

    #[test]
    fn half_offset_is_one_third() {
        let v = iou(&square(0.0, 0.0, 10.0), &square(0.0, 5.0, 10.0)).unwrap();
        assert!((v - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn empty_union_is_error() {
        let a = rect([(0.1, 0.1), (0.1, 0.2), (0.2, 0.2), (0.2, 0.1)]);
        assert!(matches!(iou(&a, &a), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn metric_truth_table() {
        let th = MetricThresholds::default();
        assert!(th.accepts(1.0, 0.0));
        assert!(!th.accepts(1.0, 35.0));
        assert!(th.accepts(0.30, 10.0));
        assert!(!th.accepts(0.25, 0.0));
        assert!(!th.accepts(0.9, 30.0));
    }

    #[test]
    fn prediction_equal_to_positive_passes() {
        let gt = ImageGrasp::new(Point2::new(50.0, 50.0), 0.3, 40.0, 1.0).unwrap();
        let rect = gt.to_default_rect().unwrap();
        assert!(rectangle_metric(&gt, &[rect], &MetricThresholds::default()).unwrap());
    }

    #[test]
    fn large_angle_offset_fails() {
        let gt = ImageGrasp::new(Point2::new(50.0, 50.0), 0.0, 40.0, 1.0).unwrap();
        let mut pred = gt;
        pred.angle = 35f64.to_radians();
        let rect = gt.to_default_rect().unwrap();
        assert!(!rectangle_metric(&pred, &[rect], &MetricThresholds::default()).unwrap());
    }

    #[test]
    fn zero_width_prediction_never_passes() {
        let pred = ImageGrasp::new(Point2::new(50.0, 50.0), 0.0, 0.0, 0.0).unwrap();
        let rect = square(45.0, 45.0, 10.0);
        assert!(!rectangle_metric(&pred, &[rect], &MetricThresholds::default()).unwrap());
    }

    #[test]
    fn empty_positives_rejected() {
        let pred = ImageGrasp::new(Point2::new(5.0, 5.0), 0.0, 4.0, 1.0).unwrap();
        assert!(matches!(
            rectangle_metric(&pred, &[], &MetricThresholds::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn threshold_validation() {
        assert!(MetricThresholds::new(0.0, 30.0).is_err());
        assert!(MetricThresholds::new(0.25, 91.0).is_err());
        assert!(MetricThresholds::new(0.25, 90.0).is_ok());
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(
            r in 0.0f64..60.0, c in 0.0f64..60.0, a in -1.5f64..1.5, w in 5.0f64..40.0,
            r2 in 0.0f64..60.0, c2 in 0.0f64..60.0, a2 in -1.5f64..1.5, w2 in 5.0f64..40.0,
        ) {
            let x = ImageGrasp::new(Point2::new(r, c), a, w, 1.0).unwrap().to_default_rect().unwrap();
            let y = ImageGrasp::new(Point2::new(r2, c2), a2, w2, 1.0).unwrap().to_default_rect().unwrap();
            let xy = iou(&x, &y).unwrap();
            prop_assert_eq!(xy, iou(&y, &x).unwrap());
            prop_assert!((0.0..=1.0).contains(&xy));
        }

        #[test]
        fn stricter_thresholds_never_accept_more(
            iou in 0.0f64..1.0, off in 0.0f64..90.0,
            lo in 0.01f64..0.98, bump in 0.0f64..0.5,
            amax in 1.0f64..90.0, cut in 0.0f64..0.99,
        ) {
            let loose = MetricThresholds { iou_min: lo, angle_max_deg: amax };
            let strict = MetricThresholds { iou_min: (lo + bump).min(0.99), angle_max_deg: amax * (1.0 - cut) };
            if strict.accepts(iou, off) {
                prop_assert!(loose.accepts(iou, off));
            }
        }
    }
}
