//! Supervised training for GI-NNet and semi-supervised training for
//! RGI-NNet (autoencoder pretraining on the whole training pool, then
//! supervised training on the labelled fraction).
//!
//! Output directory layout:
//!
//! ```text
//! metrics.jsonl   one JSON record per epoch
//! splits.txt      "<split> <scene id>" per line
//! best.ckpt       best validation accuracy (lowest loss without validation)
//! last.ckpt       final epoch
//! vqvae.ckpt      pretrained autoencoder (rginnet only)
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use grasp_core::augment::AugmentRanges;
use grasp_core::split::{holdout, make_splits, SplitSpec, Splits};
use grasp_core::MetricThresholds;
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::evaluate;
use super::loss::{huber_loss_grad, per_item};
use crate::checkpoint::{save_model, Checkpoint};
use crate::dataset::{prepare_sample, InputMode, SceneSource};
use crate::ginnet::{GiNet, GinnetSpec};
use crate::model::{from_map_sets, GraspModel, GraspNet, ModelKind};
use crate::nn::{zero_grads, Adam, Tensor};
use crate::vqvae::{assemble_rginnet, stack, train_vqvae, VqHistory, VqTrainConfig, Vqvae, VqvaeSpec};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub label_fraction: f64,
    /// Share of the labelled training scenes held out for checkpoint
    /// selection.
    pub val_fraction: f64,
    /// Share of all scenes used at all (desk-scale runs).
    pub data_fraction: f64,
    pub crop: usize,
    /// Augmented views of each labelled scene per epoch.
    pub multiplicity: usize,
    pub augment: bool,
    pub freeze_encoder: bool,
    pub vqvae: VqTrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Ginnet,
            batch_size: 8,
            lr: 1e-3,
            epochs: 50,
            seed: 0,
            test_fraction: 0.1,
            label_fraction: 1.0,
            val_fraction: 0.1,
            data_fraction: 1.0,
            crop: crate::dataset::DEFAULT_CROP,
            multiplicity: 10,
            augment: true,
            freeze_encoder: true,
            vqvae: VqTrainConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.test_fraction,
            label_fraction: self.label_fraction,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec().validate()?;
        if self.batch_size == 0 || self.multiplicity == 0 || self.crop == 0 {
            return Err(Error::InvalidConfig(
                "batch_size, multiplicity and crop must be at least 1".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::InvalidConfig("val_fraction must lie in [0, 1)".into()));
        }
        if !(self.data_fraction > 0.0 && self.data_fraction <= 1.0) {
            return Err(Error::InvalidConfig("data_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn input_mode(&self) -> InputMode {
        match self.model {
            ModelKind::Ginnet => InputMode::Rgbd,
            ModelKind::Rginnet => InputMode::Rgb,
        }
    }

    /// Every scene split, validation carve-out included.
    pub fn partition(&self, ids: &[String]) -> Result<(Splits<String>, Vec<String>)> {
        let ids = if self.data_fraction < 1.0 {
            holdout(ids, self.data_fraction, self.seed ^ 0xda7a).1
        } else {
            ids.to_vec()
        };
        let mut splits = make_splits(&ids, &self.split_spec())?;
        let (fit, val) = holdout(&splits.train_labelled, self.val_fraction, self.seed ^ 0x0a11_da7e);
        splits.train_labelled = fit;
        Ok((splits, val))
    }
}

/// Network architectures; the input channel count is set from the model
/// kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub ginnet: GinnetSpec,
    pub vqvae: VqvaeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best checkpointed model.
    pub model: GraspModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub splits: Splits<String>,
    pub val: Vec<String>,
    pub vqvae: Option<VqHistory>,
}

/// Normalized evaluation crops, e.g. for autoencoder pretraining.
pub fn load_inputs(source: &dyn SceneSource, ids: &[String], mode: InputMode, crop: usize) -> Result<Vec<Array3<f64>>> {
    ids.iter()
        .map(|id| Ok(prepare_sample(&source.load(id)?, mode, crop, None)?.input.data))
        .collect()
}

/// A freshly initialized model of `kind`; RGI-NNet needs the pretrained
/// autoencoder.
pub fn build_model(
    kind: ModelKind,
    arch: &ArchConfig,
    seed: u64,
    vq: Option<&Vqvae>,
    freeze: bool,
) -> Result<GraspModel> {
    match kind {
        ModelKind::Ginnet => Ok(GraspModel::Gi(GiNet::build(
            &arch.ginnet.clone().with_input_channels(InputMode::Rgbd.channels()),
            seed,
        )?)),
        ModelKind::Rginnet => {
            let vq = vq.ok_or_else(|| Error::Assembly("rginnet needs a pretrained autoencoder".into()))?;
            let spec = arch.ginnet.clone().with_input_channels(vq.spec.input_channels);
            Ok(GraspModel::Rgi(Box::new(assemble_rginnet(vq, &spec, seed, freeze)?)))
        }
    }
}

fn step(
    model: &mut GraspModel,
    opt: &mut Adam,
    x: &Tensor,
    t: &Tensor,
    rng: &mut dyn RngCore,
) -> Result<(f64, Tensor)> {
    zero_grads(model);
    let out = model.forward_train(x, rng)?;
    let (loss, g) = huber_loss_grad(t, &out)?;
    if loss.is_finite() {
        model.backward(&g);
        opt.step(model);
    }
    Ok((loss, out))
}

/// Repeatedly optimizes on one batch; returns the loss before every step.
pub fn fit_batch(
    model: &mut GraspModel,
    x: &Tensor,
    targets: &Tensor,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut opt = Adam::new(lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(steps);
    for i in 0..steps {
        let (loss, _) = step(model, &mut opt, x, targets, &mut rng)?;
        if !loss.is_finite() {
            return Err(Error::Training(format!("non-finite loss at step {i}, lr {lr}")));
        }
        losses.push(loss);
    }
    Ok(losses)
}

fn view_seed(seed: u64, epoch: usize, copy: usize) -> u64 {
    seed.wrapping_add((epoch as u64) << 32 | copy as u64)
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn write_splits(path: &Path, splits: &Splits<String>, val: &[String]) -> Result<()> {
    let mut s = String::new();
    for (name, ids) in [
        ("train", &splits.train_labelled),
        ("val", &val.to_vec()),
        ("unlabelled", &splits.train_unlabelled),
        ("test", &splits.test),
    ] {
        let mut ids = ids.clone();
        ids.sort();
        for id in ids {
            s.push_str(&format!("{name} {id}\n"));
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Trains a model on `source`. With `out` set, metrics, splits and
/// checkpoints are written there.
pub fn train(
    source: &dyn SceneSource,
    cfg: &TrainConfig,
    arch: &ArchConfig,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ids = source.ids();
    let (splits, val) = cfg.partition(&ids)?;
    let fit = splits.train_labelled.clone();
    log::info!(
        "{} scenes: {} train, {} val, {} unlabelled, {} test",
        ids.len(),
        fit.len(),
        val.len(),
        splits.train_unlabelled.len(),
        splits.test.len()
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_splits(&dir.join("splits.txt"), &splits, &val)?;
    }
    let mode = cfg.input_mode();

    let (vq, vq_history) = if cfg.model == ModelKind::Rginnet {
        let pool = splits.train();
        log::info!("pretraining the autoencoder on {} images", pool.len());
        let images = load_inputs(source, &pool, InputMode::Rgb, cfg.crop)?;
        let (vq, hist) = train_vqvae(&images, &arch.vqvae, &cfg.vqvae, cfg.seed)?;
        if let Some(dir) = out {
            Checkpoint::from_vqvae(&vq, BTreeMap::new()).save(&dir.join("vqvae.ckpt"))?;
        }
        (Some(vq), Some(hist))
    } else {
        (None, None)
    };
    let mut model = build_model(cfg.model, arch, cfg.seed, vq.as_ref(), cfg.freeze_encoder)?;

    let mut metrics = match out {
        Some(dir) => {
            let p = dir.join("metrics.jsonl");
            Some((std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?, p))
        }
        None => None,
    };
    let ranges = AugmentRanges::default();
    let thresholds = MetricThresholds::default();
    let mut opt = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7a11_0001);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, GraspModel)> = None;
    let mut order: Vec<(usize, usize)> = (0..fit.len())
        .flat_map(|i| (0..cfg.multiplicity).map(move |k| (i, k)))
        .collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let samples = chunk
                .iter()
                .map(|&(i, k)| {
                    let scene = source.load(&fit[i])?;
                    let aug = cfg.augment.then(|| (&ranges, view_seed(cfg.seed, epoch, k)));
                    prepare_sample(&scene, mode, cfg.crop, aug)
                })
                .collect::<Result<Vec<_>>>()?;
            let x = stack(&samples.iter().map(|s| &s.input.data).collect::<Vec<_>>());
            let targets: Vec<_> = samples.iter().map(|s| s.targets.clone()).collect();
            let t = from_map_sets(&targets)?;
            let (loss, out) = step(&mut model, &mut opt, &x, &t, &mut rng)?;
            if !loss.is_finite() {
                let items = per_item(&t, &out);
                let ids: Vec<String> = samples
                    .iter()
                    .zip(items)
                    .map(|(s, l)| format!("{}({l})", s.id))
                    .collect();
                return Err(Error::Training(format!(
                    "non-finite loss in epoch {epoch}, batch {batches}: scenes [{}], lr {}",
                    ids.join(", "),
                    opt.lr
                )));
            }
            total += loss;
            batches += 1;
        }
        let train_loss = if batches > 0 { total / batches as f64 } else { 0.0 };
        let val_accuracy = if val.is_empty() {
            None
        } else {
            Some(evaluate(&model, source, &val, cfg.crop, &thresholds, cfg.model.as_str(), "")?.accuracy())
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.6}, val accuracy {}",
            val_accuracy.map_or("n/a".to_string(), |a| format!("{a:.4}"))
        );
        if let Some((f, p)) = metrics.as_mut() {
            writeln!(f, "{}", serde_json::to_string(&record).expect("record serializes"))
                .map_err(|e| Error::io(&*p, e))?;
        }
        // higher is better: validation accuracy, else negated loss
        let score = val_accuracy.unwrap_or(-train_loss);
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
            if let Some(dir) = out {
                save_model(&dir.join("best.ckpt"), &model, epoch_meta(cfg, epoch))?;
            }
        }
        history.push(record);
    }
    if let Some(dir) = out {
        save_model(
            &dir.join("last.ckpt"),
            &model,
            epoch_meta(cfg, cfg.epochs.saturating_sub(1)),
        )?;
    }
    let (best_epoch, model) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
        splits,
        val,
        vqvae: vq_history,
    })
}

fn epoch_meta(cfg: &TrainConfig, epoch: usize) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("epoch".to_string(), epoch.to_string()),
        ("train_seed".to_string(), cfg.seed.to_string()),
        ("label_fraction".to_string(), cfg.label_fraction.to_string()),
    ])
}
