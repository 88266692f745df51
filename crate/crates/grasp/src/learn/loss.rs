//! Huber loss over `(batch, 4, H, W)` head tensors: the per-head mean over
//! every element of the batch, summed over the four heads.

use grasp_core::loss::{huber, huber_derivative};
use ndarray::{s, Axis};

use crate::nn::Tensor;
use crate::{Error, Result};

fn check(targets: &Tensor, preds: &Tensor) -> Result<()> {
    if targets.dim() != preds.dim() {
        return Err(Error::Shape(format!(
            "targets {:?} vs predictions {:?}",
            targets.dim(),
            preds.dim()
        )));
    }
    if targets.dim().1 != 4 {
        return Err(Error::Shape(format!("expected 4 heads, got {}", targets.dim().1)));
    }
    Ok(())
}

pub fn huber_loss(targets: &Tensor, preds: &Tensor) -> Result<f64> {
    check(targets, preds)?;
    let per_head = (targets.len() / 4).max(1) as f64;
    Ok((0..4)
        .map(|k| {
            let t = targets.slice(s![.., k, .., ..]);
            let p = preds.slice(s![.., k, .., ..]);
            t.iter().zip(p.iter()).map(|(a, b)| huber(a - b)).sum::<f64>() / per_head
        })
        .sum())
}

/// Loss value and its gradient with respect to `preds`.
pub fn huber_loss_grad(targets: &Tensor, preds: &Tensor) -> Result<(f64, Tensor)> {
    let value = huber_loss(targets, preds)?;
    let per_head = (targets.len() / 4).max(1) as f64;
    let mut g = preds.clone();
    ndarray::Zip::from(&mut g)
        .and(targets)
        .for_each(|g, &t| *g = -huber_derivative(t - *g) / per_head);
    Ok((value, g))
}

/// Per-item losses, used to report which scenes of a batch diverged.
pub(crate) fn per_item(targets: &Tensor, preds: &Tensor) -> Vec<f64> {
    targets
        .axis_iter(Axis(0))
        .zip(preds.axis_iter(Axis(0)))
        .map(|(t, p)| {
            let t = t.insert_axis(Axis(0)).to_owned();
            let p = p.insert_axis(Axis(0)).to_owned();
            huber_loss(&t, &p).unwrap_or(f64::NAN)
        })
        .collect()
}
