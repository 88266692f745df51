//! Training loops, the batched grasp loss and rectangle-metric evaluation.

mod eval;
mod loss;
mod train;

pub use eval::{
    evaluate, score_maps, EvalReport, SceneResult, BASELINES, GRCONVNET_PARAMS, REFERENCE_PARAMS, REPORT_SCHEMA,
};
pub use loss::{huber_loss, huber_loss_grad};
pub use train::{build_model, fit_batch, load_inputs, train, ArchConfig, EpochRecord, TrainConfig, TrainOutcome};
