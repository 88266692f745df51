//! GI-NNet: a convolutional stem, residual inception blocks with batch
//! normalization, transposed-convolution upsampling and four 1x1 heads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{ConvSpec, ConvStack};
use crate::model::{activate_heads, activate_heads_backward, GraspNet, HEAD_NAMES};
use crate::nn::{
    concat_channels, join, split_channels, BatchNorm2d, Conv2d, Dropout, MaxPool3, Param, Parameters, Tensor,
};
use crate::{Error, Result};

/// Architecture of the default model, RGB-D input.
pub const DEFAULT_SPEC_TOML: &str = include_str!("../configs/ginnet-v1.toml");

pub const SPEC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InceptionBlockSpec {
    pub b1: usize,
    pub reduce3: usize,
    pub b3: usize,
    pub reduce5: usize,
    pub b5: usize,
    pub pool_proj: usize,
}

impl InceptionBlockSpec {
    /// Four equal branches with halved 5x5 reduction.
    pub fn uniform(channels: usize) -> Self {
        let q = channels / 4;
        Self {
            b1: q,
            reduce3: q,
            b3: q,
            reduce5: (q / 2).max(1),
            b5: q,
            pool_proj: channels - 3 * q,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.b1 + self.b3 + self.b5 + self.pool_proj
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GinnetSpec {
    pub version: u32,
    pub input_channels: usize,
    /// Rates before the blocks, inside each block and before upsampling.
    pub dropout: [f64; 3],
    pub stem: Vec<ConvSpec>,
    pub blocks: Vec<InceptionBlockSpec>,
    pub upsample: Vec<ConvSpec>,
}

impl Default for GinnetSpec {
    fn default() -> Self {
        Self::from_toml(DEFAULT_SPEC_TOML).expect("bundled spec is valid")
    }
}

impl GinnetSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// The default widths with a different number of input channels.
    pub fn with_input_channels(mut self, channels: usize) -> Self {
        self.input_channels = channels;
        self
    }

    /// A narrow variant for tests and quick experiments: one 8-channel
    /// block at half resolution.
    pub fn tiny(input_channels: usize) -> Self {
        Self {
            version: SPEC_VERSION,
            input_channels,
            dropout: [0.0; 3],
            stem: vec![ConvSpec::conv(8, 3, 1, 1), ConvSpec::conv(8, 4, 2, 1)],
            blocks: vec![InceptionBlockSpec::uniform(8)],
            upsample: vec![ConvSpec::transpose(8, 4, 2, 1), ConvSpec::transpose(4, 3, 1, 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Version(format!(
                "architecture spec version {} (supported: {SPEC_VERSION})",
                self.version
            )));
        }
        if self.input_channels == 0 {
            return Err(Error::InvalidSpec("input_channels must be positive".into()));
        }
        if self.stem.is_empty() || self.upsample.is_empty() {
            return Err(Error::InvalidSpec("stem and upsample need at least one layer".into()));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::InvalidSpec("dropout rates must lie in [0, 1)".into()));
        }
        for (i, s) in self.stem.iter().enumerate() {
            s.validate(&format!("stem.{i}"))?;
        }
        for (i, s) in self.upsample.iter().enumerate() {
            s.validate(&format!("upsample.{i}"))?;
        }
        let width = self.stem.last().map_or(self.input_channels, |s| s.out_channels);
        for (i, b) in self.blocks.iter().enumerate() {
            let branches = [b.b1, b.reduce3, b.b3, b.reduce5, b.b5, b.pool_proj];
            if branches.contains(&0) {
                return Err(Error::InvalidSpec(format!(
                    "blocks.{i}: branch widths must be positive"
                )));
            }
            if b.out_channels() != width {
                return Err(Error::InvalidSpec(format!(
                    "blocks.{i}: branches sum to {} but the block input has {width} channels",
                    b.out_channels()
                )));
            }
        }
        if self.downsample_factor() != self.upsample_factor() {
            return Err(Error::InvalidSpec(format!(
                "stem downsamples by {} but upsampling restores {}",
                self.downsample_factor(),
                self.upsample_factor()
            )));
        }
        Ok(())
    }

    pub fn downsample_factor(&self) -> usize {
        self.stem.iter().filter(|s| !s.transpose).map(|s| s.stride).product()
    }

    fn upsample_factor(&self) -> usize {
        self.upsample.iter().filter(|s| s.transpose).map(|s| s.stride).product()
    }
}

/// One residual inception block: `BN(dropout(concat(branches)) + x)`.
#[derive(Clone, Debug)]
pub struct InceptionBlock {
    pub spec: InceptionBlockSpec,
    branch1: ConvStack,
    branch3: ConvStack,
    branch5: ConvStack,
    pool: MaxPool3,
    pool_proj: ConvStack,
    dropout: Dropout,
    pub bn: BatchNorm2d,
}

impl InceptionBlock {
    pub fn new<R: rand::Rng + ?Sized>(
        channels: usize,
        spec: &InceptionBlockSpec,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if spec.out_channels() != channels {
            return Err(Error::InvalidSpec(format!(
                "inception branches sum to {} for a {channels}-channel input",
                spec.out_channels()
            )));
        }
        Ok(Self {
            branch1: ConvStack::build(channels, &[ConvSpec::conv(spec.b1, 1, 1, 0)], false, rng),
            branch3: ConvStack::build(
                channels,
                &[ConvSpec::conv(spec.reduce3, 1, 1, 0), ConvSpec::conv(spec.b3, 3, 1, 1)],
                false,
                rng,
            ),
            branch5: ConvStack::build(
                channels,
                &[ConvSpec::conv(spec.reduce5, 1, 1, 0), ConvSpec::conv(spec.b5, 5, 1, 2)],
                false,
                rng,
            ),
            pool: MaxPool3::new(),
            pool_proj: ConvStack::build(channels, &[ConvSpec::conv(spec.pool_proj, 1, 1, 0)], false, rng),
            dropout: Dropout::new(dropout),
            bn: BatchNorm2d::new(channels),
            spec: spec.clone(),
        })
    }

    fn widths(&self) -> [usize; 4] {
        [self.spec.b1, self.spec.b3, self.spec.b5, self.spec.pool_proj]
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let c = x.dim().1;
        if c != self.spec.out_channels() {
            return Err(Error::InvalidSpec(format!(
                "inception block expects {} channels, got {c}",
                self.spec.out_channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let cat = concat_channels(&[
            self.branch1.forward(x)?,
            self.branch3.forward(x)?,
            self.branch5.forward(x)?,
            self.pool_proj.forward(&self.pool.forward(x))?,
        ]);
        Ok(self.bn.forward(&(self.dropout.forward(&cat) + x)))
    }

    pub fn forward_train(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor> {
        self.check(x)?;
        let pooled = self.pool.forward_train(x);
        let cat = concat_channels(&[
            self.branch1.forward_train(x)?,
            self.branch3.forward_train(x)?,
            self.branch5.forward_train(x)?,
            self.pool_proj.forward_train(&pooled)?,
        ]);
        let dropped = self.dropout.forward_train(&cat, rng);
        Ok(self.bn.forward_train(&(dropped + x)))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let g_sum = self.bn.backward(grad);
        let g_cat = self.dropout.backward(&g_sum);
        let parts = split_channels(&g_cat, &self.widths());
        let mut dx = g_sum;
        dx += &self.branch1.backward(&parts[0]);
        dx += &self.branch3.backward(&parts[1]);
        dx += &self.branch5.backward(&parts[2]);
        let g_pool = self.pool_proj.backward(&parts[3]);
        dx += &self.pool.backward(&g_pool);
        dx
    }

    /// Sets every branch weight and bias to zero.
    pub fn zero_branches(&mut self) {
        for stack in [
            &mut self.branch1,
            &mut self.branch3,
            &mut self.branch5,
            &mut self.pool_proj,
        ] {
            stack.visit_mut("", &mut |_, p| p.value.fill(0.0));
        }
    }
}

impl Parameters for InceptionBlock {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.branch1.visit(&join(prefix, "branch1"), f);
        self.branch3.visit(&join(prefix, "branch3"), f);
        self.branch5.visit(&join(prefix, "branch5"), f);
        self.pool_proj.visit(&join(prefix, "pool_proj"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.branch1.visit_mut(&join(prefix, "branch1"), f);
        self.branch3.visit_mut(&join(prefix, "branch3"), f);
        self.branch5.visit_mut(&join(prefix, "branch5"), f);
        self.pool_proj.visit_mut(&join(prefix, "pool_proj"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}

#[derive(Clone, Debug)]
pub struct GiNet {
    pub spec: GinnetSpec,
    pub seed: u64,
    stem: ConvStack,
    drop_in: Dropout,
    blocks: Vec<InceptionBlock>,
    drop_out: Dropout,
    upsample: ConvStack,
    heads: Vec<Conv2d>,
    output: Option<Tensor>,
}

impl GiNet {
    /// Builds a freshly initialized network. Weights are He-normal, biases
    /// zero; the same seed always yields the same parameters.
    pub fn build(spec: &GinnetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = ConvStack::build(spec.input_channels, &spec.stem, false, &mut rng);
        let width = stem.out_channels();
        let blocks = spec
            .blocks
            .iter()
            .map(|b| InceptionBlock::new(width, b, spec.dropout[1], &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let upsample = ConvStack::build(width, &spec.upsample, false, &mut rng);
        let feat = upsample.out_channels();
        let heads = (0..4).map(|_| Conv2d::new(feat, 1, 1, 1, 0, &mut rng)).collect();
        Ok(Self {
            spec: spec.clone(),
            seed,
            stem,
            drop_in: Dropout::new(spec.dropout[0]),
            blocks,
            drop_out: Dropout::new(spec.dropout[2]),
            upsample,
            heads,
            output: None,
        })
    }

    pub fn blocks(&self) -> &[InceptionBlock] {
        &self.blocks
    }

    /// Zeroes the four output convolutions, making the outputs constant
    /// (quality 0.5, angle components 0, width 0).
    pub fn zero_heads(&mut self) {
        for h in &mut self.heads {
            h.weight.value.fill(0.0);
            h.bias.value.fill(0.0);
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dim();
        if c != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "model expects {} input channels, got {c}",
                self.spec.input_channels
            )));
        }
        let f = self.spec.downsample_factor();
        if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "input {h}x{w} must be a positive multiple of {f}"
            )));
        }
        Ok(())
    }

    fn run_heads(&self, feat: &Tensor) -> Result<Tensor> {
        let outs = self.heads.iter().map(|h| h.forward(feat)).collect::<Result<Vec<_>>>()?;
        Ok(concat_channels(&outs))
    }

    fn check_output(x: &Tensor, y: &Tensor) -> Result<()> {
        let (_, _, h, w) = x.dim();
        let (_, _, ho, wo) = y.dim();
        if (h, w) != (ho, wo) {
            return Err(Error::InvalidSpec(format!("network maps {h}x{w} to {ho}x{wo}")));
        }
        Ok(())
    }
}

impl GraspNet for GiNet {
    fn input_channels(&self) -> usize {
        self.spec.input_channels
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut y = self.drop_in.forward(&self.stem.forward(x)?);
        for b in &self.blocks {
            y = b.forward(&y)?;
        }
        let feat = self.upsample.forward(&self.drop_out.forward(&y))?;
        let mut out = self.run_heads(&feat)?;
        Self::check_output(x, &out)?;
        activate_heads(&mut out);
        Ok(out)
    }

    fn forward_train(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor> {
        self.check_input(x)?;
        let stem = self.stem.forward_train(x)?;
        let mut y = self.drop_in.forward_train(&stem, rng);
        for b in &mut self.blocks {
            y = b.forward_train(&y, rng)?;
        }
        let y = self.drop_out.forward_train(&y, rng);
        let feat = self.upsample.forward_train(&y)?;
        let outs = self
            .heads
            .iter_mut()
            .map(|h| h.forward_train(&feat))
            .collect::<Result<Vec<_>>>()?;
        let mut out = concat_channels(&outs);
        Self::check_output(x, &out)?;
        activate_heads(&mut out);
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let out = self.output.take().expect("backward called without forward_train");
        let g = activate_heads_backward(&out, grad);
        let parts = split_channels(&g, &[1, 1, 1, 1]);
        let mut g_feat: Option<Tensor> = None;
        for (h, gp) in self.heads.iter_mut().zip(&parts) {
            let d = h.backward(gp);
            g_feat = Some(match g_feat {
                Some(acc) => acc + d,
                None => d,
            });
        }
        let g = self.upsample.backward(&g_feat.expect("four heads"));
        let mut g = self.drop_out.backward(&g);
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g);
        }
        let g = self.drop_in.backward(&g);
        self.stem.backward(&g)
    }
}

impl Parameters for GiNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.upsample.visit(&join(prefix, "upsample"), f);
        for (h, name) in self.heads.iter().zip(HEAD_NAMES) {
            h.visit(&join(prefix, &format!("heads.{name}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.upsample.visit_mut(&join(prefix, "upsample"), f);
        for (h, name) in self.heads.iter_mut().zip(HEAD_NAMES) {
            h.visit_mut(&join(prefix, &format!("heads.{name}")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::count_params;
    use crate::nn::tests::{check_input_grad, check_param_grads, random_tensor};
    use ndarray::s;
    use rand::Rng;

    /// Parameter count from the spec alone, without building layers.
    fn analytic_count(spec: &GinnetSpec) -> usize {
        let conv = |cin: usize, s: &ConvSpec| cin * s.out_channels * s.kernel * s.kernel + s.out_channels;
        let mut c = spec.input_channels;
        let mut n = 0;
        for s in &spec.stem {
            n += conv(c, s);
            c = s.out_channels;
        }
        for b in &spec.blocks {
            n += c * b.b1 + b.b1;
            n += c * b.reduce3 + b.reduce3 + b.reduce3 * b.b3 * 9 + b.b3;
            n += c * b.reduce5 + b.reduce5 + b.reduce5 * b.b5 * 25 + b.b5;
            n += c * b.pool_proj + b.pool_proj;
            n += 2 * c;
        }
        for s in &spec.upsample {
            n += conv(c, s);
            c = s.out_channels;
        }
        n + 4 * (c + 1)
    }

    #[test]
    fn default_spec_meets_parameter_budget() {
        let spec = GinnetSpec::default();
        assert_eq!(spec.stem.len(), 3);
        assert_eq!(spec.blocks.len(), 5);
        let net = GiNet::build(&spec, 0).unwrap();
        let n = count_params(&net);
        assert_eq!(n, analytic_count(&spec));
        assert!((533_070..=651_530).contains(&n), "{n}");
    }

    #[test]
    fn spec_toml_round_trip() {
        let spec = GinnetSpec::default();
        assert_eq!(GinnetSpec::from_toml(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn mismatched_branch_sum_is_rejected() {
        let mut spec = GinnetSpec::default();
        spec.blocks[2].b3 = 31;
        assert!(matches!(GiNet::build(&spec, 0), Err(Error::InvalidSpec(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            InceptionBlock::new(16, &InceptionBlockSpec::uniform(8), 0.0, &mut rng),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{DEFAULT_SPEC_TOML}\nextra = 3\n");
        assert!(GinnetSpec::from_toml(&text).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = GinnetSpec::tiny(4);
        let a = GiNet::build(&spec, 7).unwrap();
        let b = GiNet::build(&spec, 7).unwrap();
        let c = GiNet::build(&spec, 8).unwrap();
        let collect = |m: &GiNet| {
            let mut v = Vec::new();
            m.visit("", &mut |_, p| v.extend(p.value.iter().copied()));
            v
        };
        assert_eq!(collect(&a), collect(&b));
        assert_ne!(collect(&a), collect(&c));
    }

    #[test]
    fn output_ranges_and_shape() {
        let net = GiNet::build(&GinnetSpec::tiny(4), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor((2, 4, 16, 12), &mut rng);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.dim(), (2, 4, 16, 12));
        assert!(y.slice(s![.., 0, .., ..]).iter().all(|&q| q > 0.0 && q < 1.0));
        assert!(y.slice(s![.., 1..3, .., ..]).iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn zero_heads_give_constant_maps() {
        let mut net = GiNet::build(&GinnetSpec::tiny(4), 1).unwrap();
        net.zero_heads();
        let x = random_tensor((1, 4, 8, 8), &mut ChaCha8Rng::seed_from_u64(3));
        let y = net.forward(&x).unwrap();
        assert!(y.slice(s![.., 0, .., ..]).iter().all(|&q| q == 0.5));
        assert!(y.slice(s![.., 1..4, .., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_channels_and_sizes_are_shape_errors() {
        let net = GiNet::build(&GinnetSpec::tiny(4), 1).unwrap();
        assert!(matches!(
            net.forward(&Tensor::zeros((1, 3, 8, 8))),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            net.forward(&Tensor::zeros((1, 4, 9, 8))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn evaluation_is_bitwise_repeatable_with_dropout() {
        let mut spec = GinnetSpec::tiny(4);
        spec.dropout = [0.5; 3];
        let net = GiNet::build(&spec, 1).unwrap();
        let x = random_tensor((1, 4, 8, 8), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn zero_branches_reduce_block_to_batch_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut block = InceptionBlock::new(8, &InceptionBlockSpec::uniform(8), 0.0, &mut rng).unwrap();
        block.zero_branches();
        let x = random_tensor((2, 8, 6, 6), &mut rng);
        assert_eq!(block.forward(&x).unwrap(), block.bn.forward(&x));
        assert_eq!(block.forward(&x).unwrap().dim(), x.dim());
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut block = InceptionBlock::new(4, &InceptionBlockSpec::uniform(4), 0.0, &mut rng).unwrap();
        let x = random_tensor((1, 4, 8, 8), &mut rng);
        let fwd = |m: &mut InceptionBlock, x: &Tensor| m.forward_train(x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        check_input_grad(&x, fwd, |m, g| m.backward(g), &mut block);
        check_param_grads(&x, fwd, |m, g| m.backward(g), &mut block);
    }

    #[test]
    fn residual_path_carries_gradient_when_branches_are_dead() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut block = InceptionBlock::new(4, &InceptionBlockSpec::uniform(4), 0.0, &mut rng).unwrap();
        block.zero_branches();
        // large negative biases keep every ReLU off
        block.visit_mut("", &mut |name, p| {
            if name.ends_with("bias") && !name.starts_with("bn") {
                p.value.fill(-100.0);
            }
        });
        let x = random_tensor((1, 4, 8, 8), &mut rng);
        let fwd = |m: &mut InceptionBlock, x: &Tensor| m.forward_train(x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        check_input_grad(&x, fwd, |m, g| m.backward(g), &mut block);
    }

    #[test]
    fn toy_network_gradients_match_finite_differences() {
        let mut net = GiNet::build(&GinnetSpec::tiny(2), 11).unwrap();
        // nonzero biases keep ReLU inputs off the kink in dead channels
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        net.visit_mut("", &mut |name, p| {
            if name.ends_with(".bias") && !name.contains("bn.") {
                p.value.mapv_inplace(|_| rng.random_range(-0.2..0.2));
            }
        });
        let x = random_tensor((2, 2, 8, 8), &mut rng);
        let fwd = |m: &mut GiNet, x: &Tensor| m.forward_train(x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        check_input_grad(&x, fwd, |m, g| m.backward(g), &mut net);
        check_param_grads(&x, fwd, |m, g| m.backward(g), &mut net);
    }

    #[test]
    fn translation_moves_peak_with_input() {
        let mut net = GiNet::build(&GinnetSpec::tiny(1), 3).unwrap();
        net.zero_heads();
        // quality head reads the summed features
        net.heads[0].weight.value.fill(1.0);
        let peak = |shift: usize| {
            let mut x = Tensor::zeros((1, 1, 32, 32));
            x[[0, 0, 12 + shift, 10 + shift]] = 10.0;
            let y = net.forward(&x).unwrap();
            let q = y.slice(s![0, 0, .., ..]);
            let mut best = (0, 0);
            for ((r, c), &v) in q.indexed_iter() {
                if v > q[best] {
                    best = (r, c);
                }
            }
            best
        };
        let (r0, c0) = peak(0);
        let (r1, c1) = peak(4);
        assert!((r1 as isize - r0 as isize - 4).abs() <= 1, "{r0},{c0} -> {r1},{c1}");
        assert!((c1 as isize - c0 as isize - 4).abs() <= 1, "{r0},{c0} -> {r1},{c1}");
    }
}
