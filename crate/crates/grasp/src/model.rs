//! The grasp-network interface shared by GI-NNet and RGI-NNet, plus the
//! conversion from raw head outputs to grasp maps.

use grasp_core::{GraspMapSet, Grid};
use ndarray::{s, Axis};
use rand::RngCore;

use crate::ginnet::GiNet;
use crate::nn::{join, sigmoid, Param, Parameters, Tensor};
use crate::vqvae::RgiNet;
use crate::{Error, Result};

/// Output channel order of every grasp network.
pub const HEAD_NAMES: [&str; 4] = ["quality", "sin2", "cos2", "width"];

pub trait GraspNet: Parameters {
    fn input_channels(&self) -> usize;

    /// Evaluation pass. Returns `(batch, 4, H, W)` with channels quality
    /// (sigmoid), sin 2ψ and cos 2ψ (tanh) and width (linear).
    fn forward(&self, x: &Tensor) -> Result<Tensor>;

    /// Training pass: dropout active, batch statistics, caches kept.
    fn forward_train(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor>;

    /// Backpropagates a gradient with respect to the `forward_train` output
    /// and returns the gradient with respect to the input.
    fn backward(&mut self, grad: &Tensor) -> Tensor;
}

/// Applies the per-head squashing functions in place.
pub fn activate_heads(raw: &mut Tensor) {
    raw.slice_mut(s![.., 0, .., ..]).mapv_inplace(sigmoid);
    raw.slice_mut(s![.., 1..3, .., ..]).mapv_inplace(f64::tanh);
}

/// Gradient through the head activations given their outputs.
pub fn activate_heads_backward(out: &Tensor, grad: &Tensor) -> Tensor {
    let mut g = grad.clone();
    ndarray::Zip::from(g.slice_mut(s![.., 0, .., ..]))
        .and(out.slice(s![.., 0, .., ..]))
        .for_each(|g, &q| *g *= q * (1.0 - q));
    ndarray::Zip::from(g.slice_mut(s![.., 1..3, .., ..]))
        .and(out.slice(s![.., 1..3, .., ..]))
        .for_each(|g, &t| *g *= 1.0 - t * t);
    g
}

/// Splits a `(batch, 4, H, W)` network output into one map set per item.
pub fn to_map_sets(out: &Tensor) -> Result<Vec<GraspMapSet>> {
    let (_, c, h, w) = out.dim();
    if c != 4 {
        return Err(Error::Shape(format!("expected 4 output heads, got {c}")));
    }
    out.axis_iter(Axis(0))
        .map(|item| {
            let grid = |k: usize| Grid::from_fn(h, w, |r, col| item[[k, r, col]]);
            Ok(GraspMapSet::new(grid(0), grid(1), grid(2), grid(3))?)
        })
        .collect()
}

/// Stacks map sets into a `(batch, 4, H, W)` tensor, e.g. for targets.
pub fn from_map_sets(maps: &[GraspMapSet]) -> Result<Tensor> {
    let Some(first) = maps.first() else {
        return Err(Error::Shape("empty batch".into()));
    };
    let (h, w) = first.shape();
    let mut t = Tensor::zeros((maps.len(), 4, h, w));
    for (b, m) in maps.iter().enumerate() {
        if m.shape() != (h, w) {
            return Err(Error::Shape(format!(
                "map set {b} is {:?}, expected {:?}",
                m.shape(),
                (h, w)
            )));
        }
        for (k, grid) in m.heads().iter().enumerate() {
            for r in 0..h {
                for c in 0..w {
                    t[[b, k, r, c]] = grid[(r, c)];
                }
            }
        }
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ginnet,
    Rginnet,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ginnet => "ginnet",
            Self::Rginnet => "rginnet",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ginnet" => Ok(Self::Ginnet),
            "rginnet" => Ok(Self::Rginnet),
            other => Err(Error::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Either supported grasp network.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum GraspModel {
    Gi(GiNet),
    Rgi(Box<RgiNet>),
}

impl GraspModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Gi(_) => ModelKind::Ginnet,
            Self::Rgi(_) => ModelKind::Rginnet,
        }
    }

    fn inner(&self) -> &dyn GraspNet {
        match self {
            Self::Gi(m) => m,
            Self::Rgi(m) => m.as_ref(),
        }
    }

    fn inner_mut(&mut self) -> &mut dyn GraspNet {
        match self {
            Self::Gi(m) => m,
            Self::Rgi(m) => m.as_mut(),
        }
    }
}

impl Parameters for GraspModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.inner().visit(&join(prefix, self.kind().as_str()), f)
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        let name = join(prefix, self.kind().as_str());
        self.inner_mut().visit_mut(&name, f)
    }
}

impl GraspNet for GraspModel {
    fn input_channels(&self) -> usize {
        self.inner().input_channels()
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.inner().forward(x)
    }

    fn forward_train(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor> {
        self.inner_mut().forward_train(x, rng)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        self.inner_mut().backward(grad)
    }
}
