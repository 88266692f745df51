//! A small CPU neural-network toolkit: NCHW `f64` tensors, convolution
//! layers with hand-written backward passes, batch normalization, pooling,
//! dropout, He initialization and Adam.
//!
//! Every layer has an evaluation path (`forward`, `&self`, no caching) and a
//! training path (`forward_train` then `backward`, which caches what the
//! backward pass needs). Gradients accumulate into [`Param::grad`] until
//! [`zero_grads`] is called.

mod conv;
mod layers;
mod norm;
mod optim;

pub use conv::{col2im, im2col, weight4, Conv2d, ConvTranspose2d};
pub use layers::{concat_channels, split_channels, Dropout, MaxPool3, Relu};
pub use norm::BatchNorm2d;
pub use optim::Adam;

use ndarray::{Array4, ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Batch of feature maps, `(batch, channels, height, width)`.
pub type Tensor = Array4<f64>;

/// A named learnable array (or a non-trainable buffer such as running
/// batch-norm statistics).
#[derive(Clone, Debug)]
pub struct Param {
    pub value: ArrayD<f64>,
    pub grad: ArrayD<f64>,
    /// False for buffers that are saved but never optimized.
    pub learnable: bool,
    /// Frozen parameters keep their value during training.
    pub frozen: bool,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            value: ArrayD::zeros(IxDyn(shape)),
            grad: ArrayD::zeros(IxDyn(shape)),
            learnable: true,
            frozen: false,
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let mut p = Self::zeros(shape);
        p.value.fill(v);
        p
    }

    pub fn buffer(shape: &[usize], v: f64) -> Self {
        let mut p = Self::filled(shape, v);
        p.learnable = false;
        p
    }

    pub fn is_trainable(&self) -> bool {
        self.learnable && !self.frozen
    }

    /// Zero-mean normal weights with standard deviation `sqrt(2 / fan_in)`.
    pub fn he_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut p = Self::zeros(shape);
        p.value.iter_mut().for_each(|v| *v = normal.sample(rng));
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters. `prefix` builds dotted names such as
/// `blocks.0.branch3.weight`, which are stable and used for checkpoints.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param));
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Number of trainable scalars.
pub fn count_params(m: &dyn Parameters) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, p| {
        if p.is_trainable() {
            n += p.len();
        }
    });
    n
}

pub fn zero_grads(m: &mut dyn Parameters) {
    m.visit_mut("", &mut |_, p| p.grad.fill(0.0));
}

pub fn set_frozen(m: &mut dyn Parameters, frozen: bool) {
    m.visit_mut("", &mut |_, p| p.frozen = frozen);
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
