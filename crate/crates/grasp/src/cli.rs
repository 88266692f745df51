//! Command implementations behind the `grasp` binary. Each returns the text
//! it prints, so the commands can be driven from tests as well.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use grasp_core::frames::image_grasp_to_robot_grasp;
use grasp_core::{decode_grasps, GraspMapSet, GraspRectangle, Grid, ImageGrasp};

use crate::array::{array_to_grid, load_array};
use crate::calib::Calibration;
use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::config::RunConfig;
use crate::dataset::synth::{synth_scenes, write_raw, SynthConfig};
use crate::dataset::{
    convert, eval_crop, normalize_input, pcd_to_depth, CacheSource, InputMode, SceneRecord, SceneSource,
};
use crate::learn::{evaluate, train};
use crate::model::{to_map_sets, GraspModel, GraspNet, ModelKind};
use crate::viz::{render, write_viz};
use crate::{Error, Result};

pub const PREDICT_SCHEMA: &str = "grasp-predict/1";

/// FNV-1a over the checkpoint bytes, for report identity.
fn fingerprint(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// A loaded grasp model with a stable identity string.
pub struct LoadedModel {
    pub model: GraspModel,
    pub identity: String,
}

pub fn load_checkpoint(path: &Path, expect: Option<ModelKind>) -> Result<LoadedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::read(bytes.as_slice(), path)?;
    if let (Some(want), Some(have)) = (expect, ck.model_kind()) {
        if want != have {
            return Err(Error::Version(format!(
                "{} holds a {} model, {} was requested",
                path.display(),
                have.as_str(),
                want.as_str()
            )));
        }
    }
    if ck.header.kind == CheckpointKind::Vqvae {
        return Err(Error::Version(format!(
            "{} holds an autoencoder, not a grasp model",
            path.display()
        )));
    }
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(LoadedModel {
        model: ck.into_model()?,
        identity: format!("{name}#{:016x}", fingerprint(&bytes)),
    })
}

fn input_mode(model: &dyn GraspNet) -> Result<InputMode> {
    match model.input_channels() {
        4 => Ok(InputMode::Rgbd),
        3 => Ok(InputMode::Rgb),
        c => Err(Error::Shape(format!("no input mode has {c} channels"))),
    }
}

pub fn cmd_convert(raw: &Path, out: &Path) -> Result<String> {
    let summary = convert(raw, out)?;
    Ok(format!("{summary}\n"))
}

pub fn cmd_synth(out: &Path, scenes: usize, rows: usize, cols: usize, seed: u64) -> Result<String> {
    let cfg = SynthConfig::small(rows, cols);
    let s = synth_scenes(scenes, &cfg, seed)?;
    write_raw(out, &s)?;
    Ok(format!("wrote {} synthetic scenes to {}\n", s.len(), out.display()))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let data = cfg.require_data()?;
    let out = cfg.require_out()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let resolved = out.join("config.toml");
    std::fs::write(&resolved, cfg.to_toml()).map_err(|e| Error::io(&resolved, e))?;
    let source = CacheSource::open(data)?;
    let outcome = train(&source, &cfg.train, &cfg.arch, Some(out))?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "model={} epochs={} best_epoch={}",
        cfg.train.model.as_str(),
        outcome.history.len(),
        outcome.best_epoch
    );
    if let Some(r) = outcome.history.get(outcome.best_epoch) {
        let _ = writeln!(
            s,
            "best train_loss={:.6} val_accuracy={}",
            r.train_loss,
            r.val_accuracy.map_or("n/a".into(), |a| format!("{a:.6}"))
        );
    }
    let _ = writeln!(s, "checkpoint={}", out.join("best.ckpt").display());
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum EvalSplit {
    #[default]
    Test,
    Val,
    All,
}

/// Evaluates the configured checkpoint. The report is written to `out`
/// when set, and returned.
pub fn cmd_eval(cfg: &RunConfig, split: EvalSplit, expect: Option<ModelKind>) -> Result<String> {
    let loaded = load_checkpoint(cfg.require_checkpoint()?, expect)?;
    let source = CacheSource::open(cfg.require_data()?)?;
    let ids = source.ids();
    let chosen = match split {
        EvalSplit::All => ids,
        EvalSplit::Test => cfg.train.partition(&ids)?.0.test,
        EvalSplit::Val => cfg.train.partition(&ids)?.1,
    };
    let report = evaluate(
        &loaded.model,
        &source,
        &chosen,
        cfg.train.crop,
        &cfg.eval.thresholds()?,
        loaded.model.kind().as_str(),
        &loaded.identity,
    )?;
    let text = report.to_text();
    if let Some(out) = &cfg.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(out, &text).map_err(|e| Error::io(out, e))?;
    }
    Ok(text)
}

/// Where `predict` and `viz` take their input from.
#[derive(Clone, Debug, PartialEq)]
pub enum SceneInput {
    /// A scene of the cache named by the config's `data`.
    Cached(String),
    /// An RGB image with an optional depth file (Cornell point cloud or
    /// array container).
    Files { image: PathBuf, depth: Option<PathBuf> },
}

fn load_depth(path: &Path, shape: (usize, usize)) -> Result<Grid<f64>> {
    let grid = if path.extension().is_some_and(|e| e == "grsp") {
        array_to_grid(&load_array(path)?, path)?
    } else {
        pcd_to_depth(path, shape)?
    };
    if grid.shape() != shape {
        return Err(Error::Shape(format!(
            "depth is {:?} but the image is {shape:?}",
            grid.shape()
        )));
    }
    Ok(grid)
}

pub fn load_scene(cfg: &RunConfig, input: &SceneInput, mode: InputMode) -> Result<SceneRecord> {
    match input {
        SceneInput::Cached(id) => CacheSource::open(cfg.require_data()?)?.load(id),
        SceneInput::Files { image, depth } => {
            let rgb = image::open(image)
                .map_err(|e| Error::Decode {
                    path: image.clone(),
                    msg: e.to_string(),
                })?
                .to_rgb8();
            let shape = (rgb.height() as usize, rgb.width() as usize);
            let depth = match depth {
                Some(p) => load_depth(p, shape)?,
                None if mode == InputMode::Rgbd => {
                    return Err(Error::InvalidConfig("this model needs a depth file (--depth)".into()))
                }
                None => Grid::filled(shape.0, shape.1, 0.0),
            };
            let id = image
                .file_stem()
                .map_or("image".into(), |s| s.to_string_lossy().into_owned());
            SceneRecord::new(id, rgb, depth, vec![], vec![])
        }
    }
}

/// Network output for one scene's evaluation crop.
pub struct Prediction {
    pub view: SceneRecord,
    pub maps: GraspMapSet,
    /// Top grasps in crop coordinates.
    pub grasps: Vec<ImageGrasp>,
    /// The same grasps in source-image coordinates.
    pub source_grasps: Vec<ImageGrasp>,
}

pub fn predict_scene(model: &dyn GraspNet, scene: &SceneRecord, crop: usize, top_k: usize) -> Result<Prediction> {
    let mode = input_mode(model)?;
    let (view, t) = eval_crop(scene, crop)?;
    let x = normalize_input(&view, mode)?.insert_axis(ndarray::Axis(0));
    let maps = to_map_sets(&model.forward(&x)?)?.remove(0);
    let grasps = decode_grasps(&maps, top_k);
    let source_grasps = grasps
        .iter()
        .map(|g| ImageGrasp {
            center: t.inverse_apply(g.center),
            angle: grasp_core::normalize_angle(g.angle - t.rotation),
            width: g.width / t.zoom,
            quality: g.quality,
        })
        .collect();
    Ok(Prediction {
        view,
        maps,
        grasps,
        source_grasps,
    })
}

pub fn cmd_predict(cfg: &RunConfig, input: &SceneInput, expect: Option<ModelKind>) -> Result<String> {
    let loaded = load_checkpoint(cfg.require_checkpoint()?, expect)?;
    let scene = load_scene(cfg, input, input_mode(&loaded.model)?)?;
    let p = predict_scene(&loaded.model, &scene, cfg.train.crop, cfg.eval.top_k)?;
    let calib = cfg.calibration.as_deref().map(Calibration::load).transpose()?;
    let mut s = String::new();
    let _ = writeln!(s, "schema={PREDICT_SCHEMA}");
    let _ = writeln!(
        s,
        "source scene={} model={} checkpoint={}",
        scene.id,
        loaded.model.kind().as_str(),
        loaded.identity
    );
    for (rank, g) in p.source_grasps.iter().enumerate() {
        let _ = writeln!(
            s,
            "grasp rank={} row={:.3} col={:.3} angle_deg={:.3} width_px={:.3} quality={:.6}",
            rank + 1,
            g.center.row,
            g.center.col,
            g.angle.to_degrees(),
            g.width,
            g.quality
        );
        if let Some(c) = &calib {
            match image_grasp_to_robot_grasp(g, &scene.depth, &c.intrinsics, &c.extrinsic) {
                Ok(r) => {
                    let _ = writeln!(
                        s,
                        "robot rank={} x={:.6} y={:.6} z={:.6} yaw_deg={:.3} width_m={:.6} quality={:.6}",
                        rank + 1,
                        r.position.x,
                        r.position.y,
                        r.position.z,
                        r.yaw.to_degrees(),
                        r.width,
                        r.quality
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "robot rank={} error={}", rank + 1, Error::from(e).category());
                }
            }
        }
    }
    Ok(s)
}

pub fn cmd_viz(cfg: &RunConfig, input: &SceneInput, expect: Option<ModelKind>) -> Result<Vec<PathBuf>> {
    let out = cfg.require_out()?;
    let loaded = load_checkpoint(cfg.require_checkpoint()?, expect)?;
    let scene = load_scene(cfg, input, input_mode(&loaded.model)?)?;
    let p = predict_scene(&loaded.model, &scene, cfg.train.crop, cfg.eval.top_k.max(1))?;
    let predicted: Vec<GraspRectangle> = p
        .grasps
        .iter()
        .take(1)
        .filter_map(|g| g.to_default_rect().ok())
        .collect();
    let images = render(&p.view.rgb, &p.maps, &predicted, &p.view.positives)?;
    write_viz(out, &images)
}
