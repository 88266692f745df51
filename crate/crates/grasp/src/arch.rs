//! Convolution stacks described by serializable layer specs, shared by the
//! grasp network and the autoencoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{join, Conv2d, ConvTranspose2d, Param, Parameters, Relu, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default)]
    pub transpose: bool,
}

fn one() -> usize {
    1
}

impl ConvSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
            padding,
            transpose: false,
        }
    }

    pub fn transpose(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            transpose: true,
            ..Self::conv(out_channels, kernel, stride, padding)
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::InvalidSpec(format!(
                "{what}: channels, kernel and stride must be positive"
            )));
        }
        if self.transpose && 2 * self.padding >= self.kernel {
            return Err(Error::InvalidSpec(format!(
                "{what}: padding too large for a transposed convolution"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum ConvLayer {
    Plain(Conv2d),
    Transpose(ConvTranspose2d),
}

impl ConvLayer {
    pub fn build<R: Rng + ?Sized>(in_channels: usize, spec: &ConvSpec, rng: &mut R) -> Self {
        let ConvSpec {
            out_channels,
            kernel,
            stride,
            padding,
            transpose,
        } = *spec;
        if transpose {
            Self::Transpose(ConvTranspose2d::new(
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                rng,
            ))
        } else {
            Self::Plain(Conv2d::new(in_channels, out_channels, kernel, stride, padding, rng))
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Self::Plain(c) => c.out_channels,
            Self::Transpose(c) => c.out_channels,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self {
            Self::Plain(c) => c.output_hw(h, w),
            Self::Transpose(c) => c.output_hw(h, w),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Self::Plain(c) => c.forward(x),
            Self::Transpose(c) => c.forward(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        match self {
            Self::Plain(c) => c.forward_train(x),
            Self::Transpose(c) => c.forward_train(x),
        }
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        match self {
            Self::Plain(c) => c.backward(g),
            Self::Transpose(c) => c.backward(g),
        }
    }

    pub fn weight_mut(&mut self) -> &mut Param {
        match self {
            Self::Plain(c) => &mut c.weight,
            Self::Transpose(c) => &mut c.weight,
        }
    }
}

impl Parameters for ConvLayer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        match self {
            Self::Plain(c) => c.visit(prefix, f),
            Self::Transpose(c) => c.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        match self {
            Self::Plain(c) => c.visit_mut(prefix, f),
            Self::Transpose(c) => c.visit_mut(prefix, f),
        }
    }
}

/// A sequence of convolutions, each followed by ReLU unless it is the last
/// layer of a stack built with `linear_tail`.
#[derive(Clone, Debug)]
pub struct ConvStack {
    layers: Vec<(ConvLayer, Option<Relu>)>,
    in_channels: usize,
}

impl ConvStack {
    pub fn build<R: Rng + ?Sized>(in_channels: usize, specs: &[ConvSpec], linear_tail: bool, rng: &mut R) -> Self {
        let mut c = in_channels;
        let last = specs.len().saturating_sub(1);
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let layer = ConvLayer::build(c, s, rng);
                c = s.out_channels;
                let act = (!(linear_tail && i == last)).then(Relu::new);
                (layer, act)
            })
            .collect();
        Self { layers, in_channels }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(self.in_channels, |(l, _)| l.out_channels())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut ConvLayer {
        &mut self.layers[i].0
    }

    pub fn output_hw(&self, mut h: usize, mut w: usize) -> Result<(usize, usize)> {
        for (l, _) in &self.layers {
            (h, w) = l.output_hw(h, w)?;
        }
        Ok((h, w))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        for (l, act) in &self.layers {
            y = l.forward(&y)?;
            if let Some(a) = act {
                y = a.forward(&y);
            }
        }
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.clone();
        for (l, act) in &mut self.layers {
            y = l.forward_train(&y)?;
            if let Some(a) = act {
                y = a.forward_train(&y);
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let mut g = g.clone();
        for (l, act) in self.layers.iter_mut().rev() {
            if let Some(a) = act {
                g = a.backward(&g);
            }
            g = l.backward(&g);
        }
        g
    }
}

impl Parameters for ConvStack {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        for (i, (l, _)) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, (l, _)) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}
