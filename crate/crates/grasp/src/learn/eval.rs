//! Top-1 rectangle-metric evaluation and the text report.
//!
//! Report format (`grasp-eval/1`): one record per line, a record type
//! followed by space-separated `key=value` fields. Scenes are listed in id
//! order, so the report does not depend on the order of the test split.

use std::fmt::Write as _;

use grasp_core::{decode_grasps, rectangle_metric, GraspMapSet, GraspRectangle, ImageGrasp, MetricThresholds};

use crate::dataset::{prepare_sample, InputMode, SceneSource};
use crate::model::{to_map_sets, GraspNet};
use crate::nn::count_params;
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "grasp-eval/1";

/// Published image-wise accuracies (percent) for comparison.
pub const BASELINES: [(&str, f64); 3] = [("ggcnn", 73.0), ("grconvnet", 97.7), ("ginnet", 98.87)];

/// Trainable parameters of the GR-ConvNet comparison model.
pub const GRCONVNET_PARAMS: usize = 1_900_900;

/// Parameter count reported for GI-NNet.
pub const REFERENCE_PARAMS: usize = 592_300;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneResult {
    pub id: String,
    pub passed: bool,
    /// Top-1 grasp in crop coordinates.
    pub grasp: ImageGrasp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub checkpoint: String,
    pub params: usize,
    pub thresholds: MetricThresholds,
    pub crop: usize,
    /// Sorted by id.
    pub scenes: Vec<SceneResult>,
    /// Scenes without positive rectangles, sorted.
    pub excluded: Vec<String>,
}

impl EvalReport {
    pub fn new(
        model: impl Into<String>,
        checkpoint: impl Into<String>,
        params: usize,
        thresholds: MetricThresholds,
        crop: usize,
        mut scenes: Vec<SceneResult>,
        mut excluded: Vec<String>,
    ) -> Self {
        scenes.sort_by(|a, b| a.id.cmp(&b.id));
        excluded.sort();
        Self {
            model: model.into(),
            checkpoint: checkpoint.into(),
            params,
            thresholds,
            crop,
            scenes,
            excluded,
        }
    }

    pub fn passed(&self) -> usize {
        self.scenes.iter().filter(|s| s.passed).count()
    }

    /// Fraction of scored scenes that pass; 0 when none were scored.
    pub fn accuracy(&self) -> f64 {
        if self.scenes.is_empty() {
            0.0
        } else {
            self.passed() as f64 / self.scenes.len() as f64
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let th = &self.thresholds;
        let _ = writeln!(s, "schema={REPORT_SCHEMA}");
        let _ = writeln!(
            s,
            "run model={} checkpoint={} params={}",
            self.model, self.checkpoint, self.params
        );
        let _ = writeln!(
            s,
            "thresholds iou_min={} angle_max_deg={} crop={}",
            th.iou_min, th.angle_max_deg, self.crop
        );
        let _ = writeln!(
            s,
            "result scenes={} passed={} excluded={} accuracy={:.6}",
            self.scenes.len(),
            self.passed(),
            self.excluded.len(),
            self.accuracy()
        );
        for (name, pct) in BASELINES {
            let _ = writeln!(s, "baseline name={name} accuracy_pct={pct}");
        }
        let _ = writeln!(s, "params reference={REFERENCE_PARAMS} grconvnet={GRCONVNET_PARAMS}");
        for r in &self.scenes {
            let g = &r.grasp;
            let _ = writeln!(
                s,
                "scene id={} pass={} row={:.3} col={:.3} angle_deg={:.3} width_px={:.3} quality={:.6}",
                r.id,
                r.passed,
                g.center.row,
                g.center.col,
                g.angle.to_degrees(),
                g.width,
                g.quality
            );
        }
        for id in &self.excluded {
            let _ = writeln!(s, "excluded id={id}");
        }
        s
    }
}

/// Decodes the top grasp of `maps` and scores it against `positives`.
pub fn score_maps(
    maps: &GraspMapSet,
    positives: &[GraspRectangle],
    th: &MetricThresholds,
) -> Result<(bool, ImageGrasp)> {
    let grasp = decode_grasps(maps, 1)
        .into_iter()
        .next()
        .ok_or_else(|| Error::Shape("empty prediction maps".into()))?;
    Ok((rectangle_metric(&grasp, positives, th)?, grasp))
}

fn mode_for(channels: usize) -> Result<InputMode> {
    match channels {
        4 => Ok(InputMode::Rgbd),
        3 => Ok(InputMode::Rgb),
        c => Err(Error::Shape(format!("no input mode has {c} channels"))),
    }
}

/// Scores `model` on the evaluation crop of every scene in `ids`.
pub fn evaluate(
    model: &dyn GraspNet,
    source: &dyn SceneSource,
    ids: &[String],
    crop: usize,
    thresholds: &MetricThresholds,
    model_name: &str,
    checkpoint: &str,
) -> Result<EvalReport> {
    if ids.is_empty() {
        return Err(Error::InvalidConfig("evaluation split is empty".into()));
    }
    let mode = mode_for(model.input_channels())?;
    let mut scenes = Vec::new();
    let mut excluded = Vec::new();
    for id in ids {
        let scene = source.load(id)?;
        if scene.positives.is_empty() {
            excluded.push(id.clone());
            continue;
        }
        let sample = prepare_sample(&scene, mode, crop, None)?;
        if sample.positives.is_empty() {
            excluded.push(id.clone());
            continue;
        }
        let x = sample.input.data.clone().insert_axis(ndarray::Axis(0));
        let maps = to_map_sets(&model.forward(&x)?)?.remove(0);
        let (passed, grasp) = score_maps(&maps, &sample.positives, thresholds)?;
        scenes.push(SceneResult {
            id: id.clone(),
            passed,
            grasp,
        });
    }
    if !excluded.is_empty() {
        log::warn!("{} scene(s) without positives excluded from evaluation", excluded.len());
    }
    Ok(EvalReport::new(
        model_name,
        checkpoint,
        count_params(model),
        *thresholds,
        crop,
        scenes,
        excluded,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use grasp_core::{encode_target_maps, maps::DEFAULT_MAX_WIDTH, Point2};

    fn rect(row: f64, col: f64) -> GraspRectangle {
        ImageGrasp::new(Point2::new(row, col), 0.0, 30.0, 1.0)
            .unwrap()
            .to_default_rect()
            .unwrap()
    }

    #[test]
    fn oracle_maps_pass() {
        let pos = vec![rect(20.0, 24.0)];
        let maps = encode_target_maps(&pos, 48, 48, DEFAULT_MAX_WIDTH).unwrap();
        let (ok, g) = score_maps(&maps, &pos, &MetricThresholds::default()).unwrap();
        assert!(ok, "{g:?}");
    }

    #[test]
    fn flat_quality_gives_corner_grasp_that_fails() {
        let pos = vec![rect(20.0, 24.0)];
        let maps = GraspMapSet::zeros(48, 48);
        let (ok, g) = score_maps(&maps, &pos, &MetricThresholds::default()).unwrap();
        assert!(!ok);
        assert_eq!((g.center, g.width), (Point2::new(0.5, 0.5), 0.0));
    }

    #[test]
    fn report_is_sorted_and_consistent() {
        let g = ImageGrasp::new(Point2::new(1.0, 2.0), 0.1, 3.0, 0.5).unwrap();
        let mk = |id: &str, passed| SceneResult {
            id: id.into(),
            passed,
            grasp: g,
        };
        let a = EvalReport::new(
            "ginnet",
            "x",
            10,
            MetricThresholds::default(),
            224,
            vec![mk("b", true), mk("a", false), mk("c", true)],
            vec![],
        );
        let b = EvalReport::new(
            "ginnet",
            "x",
            10,
            MetricThresholds::default(),
            224,
            vec![mk("c", true), mk("b", true), mk("a", false)],
            vec![],
        );
        assert_eq!(a.to_text(), b.to_text());
        assert!((a.accuracy() - 2.0 / 3.0).abs() < 1e-15);
        let text = a.to_text();
        assert!(text.starts_with("schema=grasp-eval/1\n"));
        assert!(text.contains("accuracy=0.666667"));
        assert!(text.contains("grconvnet=1900900"));
        assert!(text.contains("baseline name=ginnet accuracy_pct=98.87"));
    }
}
