//! Vector-quantized autoencoder for unlabelled pretraining, and RGI-NNet:
//! the pretrained encoder and codebook feeding a fresh decoder whose output
//! is the input of a three-channel GI-NNet.

use grasp_core::quantize::{
    codebook_grad, commitment_grad, is_collapsed, usage_histogram, vqvae_loss, Codebook, VqLoss,
};
use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{ConvSpec, ConvStack};
use crate::ginnet::{GiNet, GinnetSpec};
use crate::model::GraspNet;
use crate::nn::{join, set_frozen, zero_grads, Adam, Conv2d, Param, Parameters, Tensor};
use crate::{Error, Result};

pub const VQVAE_SPEC_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqvaeSpec {
    pub version: u32,
    pub input_channels: usize,
    pub encoder: Vec<ConvSpec>,
    /// Latent dimension D; a 1x1 projection maps the encoder output to it.
    pub embedding_dim: usize,
    /// Codebook size N.
    pub num_embeddings: usize,
    /// Commitment weight.
    pub beta: f64,
    /// The last decoder layer is linear and must output `input_channels`.
    pub decoder: Vec<ConvSpec>,
}

impl Default for VqvaeSpec {
    fn default() -> Self {
        Self {
            version: VQVAE_SPEC_VERSION,
            input_channels: 3,
            encoder: vec![
                ConvSpec::conv(32, 4, 2, 1),
                ConvSpec::conv(64, 4, 2, 1),
                ConvSpec::conv(64, 3, 1, 1),
            ],
            embedding_dim: 64,
            num_embeddings: 512,
            beta: 0.25,
            decoder: vec![
                ConvSpec::conv(64, 3, 1, 1),
                ConvSpec::transpose(32, 4, 2, 1),
                ConvSpec::transpose(3, 4, 2, 1),
            ],
        }
    }
}

impl VqvaeSpec {
    /// Small widths for tests and smoke runs.
    pub fn tiny() -> Self {
        Self {
            version: VQVAE_SPEC_VERSION,
            input_channels: 3,
            encoder: vec![ConvSpec::conv(8, 4, 2, 1), ConvSpec::conv(8, 3, 1, 1)],
            embedding_dim: 4,
            num_embeddings: 32,
            beta: 0.25,
            decoder: vec![ConvSpec::conv(8, 3, 1, 1), ConvSpec::transpose(3, 4, 2, 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != VQVAE_SPEC_VERSION {
            return Err(Error::Version(format!(
                "autoencoder spec version {} (supported: {VQVAE_SPEC_VERSION})",
                self.version
            )));
        }
        if self.num_embeddings == 0 || self.embedding_dim == 0 {
            return Err(Error::InvalidConfig(
                "codebook must have at least one embedding of positive dimension".into(),
            ));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig("beta must be finite and non-negative".into()));
        }
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::InvalidSpec("encoder and decoder need at least one layer".into()));
        }
        for (i, s) in self.encoder.iter().enumerate() {
            s.validate(&format!("encoder.{i}"))?;
        }
        for (i, s) in self.decoder.iter().enumerate() {
            s.validate(&format!("decoder.{i}"))?;
        }
        let out = self.decoder.last().map_or(0, |s| s.out_channels);
        if out != self.input_channels {
            return Err(Error::InvalidSpec(format!(
                "decoder outputs {out} channels for a {}-channel input",
                self.input_channels
            )));
        }
        Ok(())
    }
}

/// Nearest-embedding quantization with a straight-through gradient.
#[derive(Clone, Debug)]
pub struct Quantizer {
    /// `(N, D)` embeddings.
    pub codebook: Param,
    pub beta: f64,
    cache: Option<SiteCache>,
}

/// Encoder sites, quantized sites, chosen codes and the latent shape.
type SiteCache = (Vec<f64>, Vec<f64>, Vec<usize>, (usize, usize, usize, usize));

/// `(B, D, h, w)` to site-major `[b][y][x][d]`.
fn to_sites(z: &Tensor) -> Vec<f64> {
    z.view().permuted_axes([0, 2, 3, 1]).iter().copied().collect()
}

fn from_sites(v: Vec<f64>, (b, d, h, w): (usize, usize, usize, usize)) -> Tensor {
    ndarray::Array4::from_shape_vec((b, h, w, d), v)
        .expect("site count matches")
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned()
}

impl Quantizer {
    /// Embeddings drawn uniformly from `[-1/N, 1/N]`.
    pub fn new<R: Rng + ?Sized>(n: usize, dim: usize, beta: f64, rng: &mut R) -> Self {
        let mut codebook = Param::zeros(&[n, dim]);
        let a = 1.0 / n.max(1) as f64;
        codebook.value.iter_mut().for_each(|v| *v = rng.random_range(-a..=a));
        Self {
            codebook,
            beta,
            cache: None,
        }
    }

    pub fn num_embeddings(&self) -> usize {
        self.codebook.value.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.codebook.value.shape()[1]
    }

    pub fn table(&self) -> Result<Codebook> {
        let data = self.codebook.value.iter().copied().collect();
        Ok(Codebook::new(self.num_embeddings(), self.dim(), data)?)
    }

    /// Quantizes `(B, D, h, w)` latents; indices are in site-major order.
    pub fn quantize(&self, z_e: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let (b, d, h, w) = z_e.dim();
        if d != self.dim() {
            return Err(Error::Shape(format!(
                "latent has {d} channels, codebook dimension is {}",
                self.dim()
            )));
        }
        let (q, idx) = grasp_core::quantize::quantize(&to_sites(z_e), &self.table()?)?;
        Ok((from_sites(q, (b, d, h, w)), idx))
    }

    pub fn forward_train(&mut self, z_e: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let e = to_sites(z_e);
        let (q, idx) = grasp_core::quantize::quantize(&e, &self.table()?)?;
        let z_q = from_sites(q.clone(), z_e.dim());
        self.cache = Some((e, q, idx.clone(), z_e.dim()));
        Ok((z_q, idx))
    }

    /// Mean squared latent distance of the last training pass.
    pub fn latent_mse(&self) -> f64 {
        self.cache.as_ref().map_or(0.0, |(e, q, _, _)| {
            e.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / e.len().max(1) as f64
        })
    }

    /// Straight-through backward. `grad_q` (gradient at the quantized
    /// latents) is copied to the encoder output; when `with_latent_terms` is
    /// set the commitment gradient is added there and the codebook term's
    /// gradient is accumulated into the selected embeddings.
    pub fn backward(&mut self, grad_q: &Tensor, with_latent_terms: bool) -> Tensor {
        let (e, q, idx, dims) = self.cache.take().expect("backward called without forward_train");
        if !with_latent_terms {
            return grad_q.clone();
        }
        let commit = from_sites(commitment_grad(&e, &q, self.beta), dims);
        let cb = codebook_grad(&e, &q);
        let d = self.dim();
        for (site, &k) in idx.iter().enumerate() {
            for j in 0..d {
                self.codebook.grad[[k, j]] += cb[site * d + j];
            }
        }
        grad_q + &commit
    }
}

impl Parameters for Quantizer {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "codebook"), &self.codebook);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "codebook"), &mut self.codebook);
    }
}

/// Encoder, 1x1 latent projection and quantizer: the part of the
/// autoencoder that RGI-NNet reuses.
#[derive(Clone, Debug)]
pub struct VqEncoder {
    pub convs: ConvStack,
    pub proj: Conv2d,
    pub quantizer: Quantizer,
}

impl VqEncoder {
    fn build<R: Rng + ?Sized>(spec: &VqvaeSpec, rng: &mut R) -> Self {
        let convs = ConvStack::build(spec.input_channels, &spec.encoder, false, rng);
        let proj = Conv2d::new(convs.out_channels(), spec.embedding_dim, 1, 1, 0, rng);
        let quantizer = Quantizer::new(spec.num_embeddings, spec.embedding_dim, spec.beta, rng);
        Self { convs, proj, quantizer }
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let c = x.dim().1;
        if c != self.convs.in_channels() {
            return Err(Error::Shape(format!(
                "encoder expects {} channels, got {c}",
                self.convs.in_channels()
            )));
        }
        Ok(())
    }

    /// Continuous latents `Z_e`, shape `(B, D, h', w')`.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        self.proj.forward(&self.convs.forward(x)?)
    }

    fn encode_train(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let h = self.convs.forward_train(x)?;
        self.proj.forward_train(&h)
    }

    fn backward(&mut self, grad_e: &Tensor) -> Tensor {
        let g = self.proj.backward(grad_e);
        self.convs.backward(&g)
    }
}

impl Parameters for VqEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.convs.visit(&join(prefix, "encoder"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        self.quantizer.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.convs.visit_mut(&join(prefix, "encoder"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
        self.quantizer.visit_mut(prefix, f);
    }
}

#[derive(Clone, Debug)]
pub struct Vqvae {
    pub spec: VqvaeSpec,
    pub seed: u64,
    pub encoder: VqEncoder,
    pub decoder: ConvStack,
}

/// Result of a full autoencoder pass.
#[derive(Clone, Debug)]
pub struct VqOutput {
    pub z_e: Tensor,
    pub z_q: Tensor,
    pub indices: Vec<usize>,
    pub recon: Tensor,
}

impl Vqvae {
    pub fn build(spec: &VqvaeSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = VqEncoder::build(spec, &mut rng);
        let decoder = ConvStack::build(spec.embedding_dim, &spec.decoder, true, &mut rng);
        Ok(Self {
            spec: spec.clone(),
            seed,
            encoder,
            decoder,
        })
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.encoder.encode(x)
    }

    pub fn quantize(&self, z_e: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        self.encoder.quantizer.quantize(z_e)
    }

    pub fn decode(&self, z_q: &Tensor) -> Result<Tensor> {
        self.decoder.forward(z_q)
    }

    pub fn forward(&self, x: &Tensor) -> Result<VqOutput> {
        let z_e = self.encode(x)?;
        let (z_q, indices) = self.quantize(&z_e)?;
        let recon = self.decode(&z_q)?;
        if recon.dim() != x.dim() {
            return Err(Error::Shape(format!(
                "reconstruction {:?} for input {:?}",
                recon.dim(),
                x.dim()
            )));
        }
        Ok(VqOutput {
            z_e,
            z_q,
            indices,
            recon,
        })
    }

    pub fn loss(&self, x: &Tensor) -> Result<VqLoss> {
        let out = self.forward(x)?;
        Ok(loss_of(x, &out, self.spec.beta))
    }

    /// One optimization step on a batch; returns the loss before the update.
    pub fn train_step(&mut self, x: &Tensor, opt: &mut Adam) -> Result<(VqLoss, Vec<usize>)> {
        zero_grads(self);
        let z_e = self.encoder.encode_train(x)?;
        let (z_q, indices) = self.encoder.quantizer.forward_train(&z_e)?;
        let recon = self.decoder.forward_train(&z_q)?;
        if recon.dim() != x.dim() {
            return Err(Error::Shape(format!(
                "reconstruction {:?} for input {:?}",
                recon.dim(),
                x.dim()
            )));
        }
        let loss = loss_of(
            x,
            &VqOutput {
                z_e,
                z_q,
                indices: Vec::new(),
                recon: recon.clone(),
            },
            self.spec.beta,
        );
        let n = x.len() as f64;
        let g_recon = (&recon - x) * (2.0 / n);
        let g_q = self.decoder.backward(&g_recon);
        let g_e = self.encoder.quantizer.backward(&g_q, true);
        self.encoder.backward(&g_e);
        opt.step(self);
        Ok((loss, indices))
    }

    /// Replaces the codebook with randomly chosen latent sites of `x`
    /// (with replacement when there are fewer sites than embeddings).
    pub fn init_codebook_from(&mut self, x: &Tensor, rng: &mut impl Rng) -> Result<()> {
        let z = self.encode(x)?;
        let sites = to_sites(&z);
        let d = self.spec.embedding_dim;
        let count = sites.len() / d;
        if count == 0 {
            return Ok(());
        }
        let n = self.spec.num_embeddings;
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(rng);
        let cb = &mut self.encoder.quantizer.codebook.value;
        for k in 0..n {
            let s = if k < count {
                order[k]
            } else {
                rng.random_range(0..count)
            };
            for j in 0..d {
                // small jitter separates duplicates
                let jitter = if k < count { 0.0 } else { rng.random_range(-1e-3..1e-3) };
                cb[[k, j]] = sites[s * d + j] + jitter;
            }
        }
        Ok(())
    }
}

fn loss_of(x: &Tensor, out: &VqOutput, beta: f64) -> VqLoss {
    let flat = |t: &Tensor| t.iter().copied().collect::<Vec<_>>();
    vqvae_loss(&flat(x), &flat(&out.recon), &flat(&out.z_e), &flat(&out.z_q), beta)
}

impl Parameters for Vqvae {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(prefix, f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(prefix, f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Random flips and transposes of the unlabelled images.
    pub augment: bool,
    /// Seed the codebook with encoder outputs of the first batch.
    pub data_init: bool,
}

impl Default for VqTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 8,
            lr: 1e-3,
            augment: true,
            data_init: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VqHistory {
    /// Mean total loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Code usage over the final epoch.
    pub usage: Vec<usize>,
    pub collapsed: bool,
}

/// Random dihedral transform of a `(C, H, W)` image (square images may also
/// be transposed).
fn dihedral(img: &Array3<f64>, rng: &mut impl Rng) -> Array3<f64> {
    let mut v = img.view();
    if rng.random_bool(0.5) {
        v.invert_axis(Axis(1));
    }
    if rng.random_bool(0.5) {
        v.invert_axis(Axis(2));
    }
    let (_, h, w) = v.dim();
    if h == w && rng.random_bool(0.5) {
        v.swap_axes(1, 2);
    }
    v.as_standard_layout().into_owned()
}

pub fn stack(images: &[&Array3<f64>]) -> Tensor {
    let views: Vec<_> = images.iter().map(|i| i.view()).collect();
    ndarray::stack(Axis(0), &views).expect("images share a shape")
}

/// Trains an autoencoder on unlabelled `(C, H, W)` images.
pub fn train_vqvae(
    images: &[Array3<f64>],
    spec: &VqvaeSpec,
    cfg: &VqTrainConfig,
    seed: u64,
) -> Result<(Vqvae, VqHistory)> {
    if images.is_empty() {
        return Err(Error::InvalidConfig("no unlabelled images to pretrain on".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidConfig("batch_size and lr must be positive".into()));
    }
    let mut model = Vqvae::build(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut opt = Adam::new(cfg.lr);
    let mut history = VqHistory::default();
    let mut order: Vec<usize> = (0..images.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        let mut usage = vec![0; spec.num_embeddings];
        for chunk in order.chunks(cfg.batch_size) {
            let owned: Vec<Array3<f64>> = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        dihedral(&images[i], &mut rng)
                    } else {
                        images[i].clone()
                    }
                })
                .collect();
            let x = stack(&owned.iter().collect::<Vec<_>>());
            if epoch == 0 && batches == 0 && cfg.data_init {
                model.init_codebook_from(&x, &mut rng)?;
            }
            let (loss, idx) = model.train_step(&x, &mut opt)?;
            if !loss.total().is_finite() {
                return Err(Error::Training(format!("non-finite autoencoder loss in epoch {epoch}")));
            }
            for (u, c) in usage.iter_mut().zip(usage_histogram(&idx, spec.num_embeddings)) {
                *u += c;
            }
            total += loss.total();
            batches += 1;
        }
        let mean = total / batches as f64;
        log::info!("vqvae epoch {epoch}: loss {mean:.6}");
        history.epoch_losses.push(mean);
        history.usage = usage;
    }
    history.collapsed = is_collapsed(&history.usage);
    let used = history.usage.iter().filter(|&&c| c > 0).count();
    log::info!("codebook usage: {used} of {} codes active", spec.num_embeddings);
    if history.collapsed {
        log::warn!("codebook collapse: at least 90% of sites use fewer than 5% of the codes");
    }
    Ok((model, history))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RginnetSpec {
    pub vqvae: VqvaeSpec,
    pub ginnet: GinnetSpec,
    /// Keep the pretrained encoder and codebook fixed.
    pub freeze_encoder: bool,
}

/// RGI-NNet: pretrained encoder and quantizer, reinitialized decoder, and a
/// GI-NNet reading the decoder output.
#[derive(Clone, Debug)]
pub struct RgiNet {
    pub spec: RginnetSpec,
    pub seed: u64,
    pub encoder: VqEncoder,
    pub decoder: ConvStack,
    pub ginnet: GiNet,
}

impl RgiNet {
    /// A structurally complete model with random weights, e.g. as the
    /// target of a checkpoint load.
    pub fn build(spec: &RginnetSpec, seed: u64) -> Result<Self> {
        let vq = Vqvae::build(&spec.vqvae, seed)?;
        assemble_rginnet(&vq, &spec.ginnet, seed, spec.freeze_encoder)
    }
}

/// Builds RGI-NNet around a trained autoencoder's encoder and codebook.
pub fn assemble_rginnet(vq: &Vqvae, ginnet: &GinnetSpec, seed: u64, freeze_encoder: bool) -> Result<RgiNet> {
    let dec_out = vq.spec.decoder.last().map_or(0, |s| s.out_channels);
    if ginnet.input_channels != dec_out {
        return Err(Error::Assembly(format!(
            "decoder produces {dec_out} channels but the grasp network expects {}",
            ginnet.input_channels
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdec0_de00);
    let decoder = ConvStack::build(vq.spec.embedding_dim, &vq.spec.decoder, true, &mut rng);
    let probe = 16 * ginnet.downsample_factor();
    let (lh, lw) = vq.encoder.convs.output_hw(probe, probe)?;
    let (oh, ow) = decoder.output_hw(lh, lw)?;
    if (oh, ow) != (probe, probe) {
        return Err(Error::Assembly(format!(
            "decoder maps a {probe}x{probe} input to {oh}x{ow}, the grasp network needs equal sizes"
        )));
    }
    let mut encoder = vq.encoder.clone();
    set_frozen(&mut encoder, freeze_encoder);
    Ok(RgiNet {
        spec: RginnetSpec {
            vqvae: vq.spec.clone(),
            ginnet: ginnet.clone(),
            freeze_encoder,
        },
        seed,
        encoder,
        decoder,
        ginnet: GiNet::build(ginnet, seed)?,
    })
}

impl GraspNet for RgiNet {
    fn input_channels(&self) -> usize {
        self.spec.vqvae.input_channels
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let z_e = self.encoder.encode(x)?;
        let (z_q, _) = self.encoder.quantizer.quantize(&z_e)?;
        let d = self.decoder.forward(&z_q)?;
        if d.dim() != (x.dim().0, self.ginnet.input_channels(), x.dim().2, x.dim().3) {
            return Err(Error::Assembly(format!(
                "decoder output {:?} for input {:?}",
                d.dim(),
                x.dim()
            )));
        }
        self.ginnet.forward(&d)
    }

    fn forward_train(&mut self, x: &Tensor, rng: &mut dyn RngCore) -> Result<Tensor> {
        let z_e = self.encoder.encode_train(x)?;
        let (z_q, _) = self.encoder.quantizer.forward_train(&z_e)?;
        let d = self.decoder.forward_train(&z_q)?;
        if d.dim() != (x.dim().0, self.ginnet.input_channels(), x.dim().2, x.dim().3) {
            return Err(Error::Assembly(format!(
                "decoder output {:?} for input {:?}",
                d.dim(),
                x.dim()
            )));
        }
        self.ginnet.forward_train(&d, rng)
    }

    fn backward(&mut self, grad: &Tensor) -> Tensor {
        let g = self.ginnet.backward(grad);
        let g = self.decoder.backward(&g);
        let g = self.encoder.quantizer.backward(&g, false);
        self.encoder.backward(&g)
    }
}

impl Parameters for RgiNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(prefix, f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.ginnet.visit(&join(prefix, "ginnet"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(prefix, f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.ginnet.visit_mut(&join(prefix, "ginnet"), f);
    }
}
