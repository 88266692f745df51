//! Smooth-L1 (Huber, delta = 1) loss over grasp maps.

use alloc::vec::Vec;

use crate::maps::GraspMapSet;
use crate::{Error, Grid, Result};

/// Per-element Huber value for a difference `d`.
pub fn huber(d: f64) -> f64 {
    let a = d.abs();
    if a < 1.0 {
        0.5 * d * d
    } else {
        a - 0.5
    }
}

/// Derivative of [`huber`] with respect to `d`.
pub fn huber_derivative(d: f64) -> f64 {
    d.clamp(-1.0, 1.0)
}

/// Mean Huber loss between targets and predictions.
pub fn huber_mean(target: &[f64], pred: &[f64]) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::Shape {
            expected: (target.len(), 1),
            found: (pred.len(), 1),
        });
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = target.iter().zip(pred).map(|(t, p)| huber(t - p)).sum();
    Ok(sum / target.len() as f64)
}

/// Gradient of [`huber_mean`] with respect to the predictions.
pub fn huber_mean_grad(target: &[f64], pred: &[f64]) -> Result<Vec<f64>> {
    if target.len() != pred.len() {
        return Err(Error::Shape {
            expected: (target.len(), 1),
            found: (pred.len(), 1),
        });
    }
    let n = target.len().max(1) as f64;
    Ok(target
        .iter()
        .zip(pred)
        .map(|(t, p)| -huber_derivative(t - p) / n)
        .collect())
}

fn check_shapes(targets: &GraspMapSet, preds: &GraspMapSet) -> Result<()> {
    if targets.shape() != preds.shape() {
        return Err(Error::Shape {
            expected: targets.shape(),
            found: preds.shape(),
        });
    }
    Ok(())
}

/// Sum over the four heads of the per-head mean Huber loss.
pub fn grasp_huber_loss(targets: &GraspMapSet, preds: &GraspMapSet) -> Result<f64> {
    check_shapes(targets, preds)?;
    targets
        .heads()
        .iter()
        .zip(preds.heads())
        .map(|(t, p)| huber_mean(t.as_slice(), p.as_slice()))
        .sum()
}

/// Loss value together with its gradient with respect to every prediction.
pub fn grasp_huber_loss_grad(targets: &GraspMapSet, preds: &GraspMapSet) -> Result<(f64, GraspMapSet)> {
    let value = grasp_huber_loss(targets, preds)?;
    let (rows, cols) = targets.shape();
    let grad = |t: &Grid<f64>, p: &Grid<f64>| -> Result<Grid<f64>> {
        Grid::from_vec(rows, cols, huber_mean_grad(t.as_slice(), p.as_slice())?)
    };
    let g = GraspMapSet::new(
        grad(&targets.quality, &preds.quality)?,
        grad(&targets.sin2, &preds.sin2)?,
        grad(&targets.cos2, &preds.cos2)?,
        grad(&targets.width, &preds.width)?,
    )?;
    Ok((value, g))
}
