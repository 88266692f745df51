//! Nearest-neighbour vector quantization against a learned codebook.
//!
//! Latent grids are passed site-major: `sites x dim` values, one row per
//! spatial site.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `n` embeddings of dimension `dim`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Codebook {
    pub fn new(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "codebook must be non-empty (got {n}x{dim})"
            )));
        }
        if data.len() != n * dim {
            return Err(Error::InvalidConfig(format!(
                "codebook data has {} values, expected {}",
                data.len(),
                n * dim
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("codebook contains NaN".into()));
        }
        Ok(Self { n, dim, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Index of the closest embedding in Euclidean distance; ties go to the
    /// smallest index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..self.n {
            let d: f64 = self.row(j).iter().zip(v).map(|(e, x)| (x - e) * (x - e)).sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// Replaces every latent site by its nearest codebook row.
///
/// Returns the quantized latents (same layout) and the chosen indices.
pub fn quantize(latents: &[f64], codebook: &Codebook) -> Result<(Vec<f64>, Vec<usize>)> {
    let dim = codebook.dim();
    if !latents.len().is_multiple_of(dim) {
        return Err(Error::InvalidInput(
            "latent length is not a multiple of the codebook dimension",
        ));
    }
    let mut quantized = Vec::with_capacity(latents.len());
    let mut indices = Vec::with_capacity(latents.len() / dim);
    for site in latents.chunks_exact(dim) {
        let k = codebook.nearest(site);
        indices.push(k);
        quantized.extend_from_slice(codebook.row(k));
    }
    Ok((quantized, indices))
}

/// One-hot posterior over codes for a single site.
pub fn posterior(site: &[f64], codebook: &Codebook) -> Vec<f64> {
    let mut p = vec![0.0; codebook.len()];
    p[codebook.nearest(site)] = 1.0;
    p
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// The three VQ-VAE objective terms. The codebook and commitment terms have
/// the same value; they differ in which side receives the gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VqLoss {
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub beta: f64,
}

impl VqLoss {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.codebook + self.beta * self.commitment
    }
}

pub fn vqvae_loss(x: &[f64], recon: &[f64], z_e: &[f64], z_q: &[f64], beta: f64) -> VqLoss {
    let latent = mse(z_e, z_q);
    VqLoss {
        reconstruction: mse(recon, x),
        codebook: latent,
        commitment: latent,
        beta,
    }
}

/// Gradient of `beta * commitment` with respect to `z_e` (codes held fixed).
pub fn commitment_grad(z_e: &[f64], z_q: &[f64], beta: f64) -> Vec<f64> {
    let n = z_e.len().max(1) as f64;
    z_e.iter().zip(z_q).map(|(e, q)| 2.0 * beta * (e - q) / n).collect()
}

/// Gradient of the codebook term with respect to `z_q` (encoder held fixed).
pub fn codebook_grad(z_e: &[f64], z_q: &[f64]) -> Vec<f64> {
    let n = z_e.len().max(1) as f64;
    z_e.iter().zip(z_q).map(|(e, q)| 2.0 * (q - e) / n).collect()
}

/// Count of sites assigned to each code.
pub fn usage_histogram(indices: &[usize], n: usize) -> Vec<usize> {
    let mut h = vec![0; n];
    for &i in indices {
        if i < n {
            h[i] += 1;
        }
    }
    h
}

/// Collapse: at least 90% of sites land on fewer than 5% of the codes.
pub fn is_collapsed(histogram: &[usize]) -> bool {
    let total: usize = histogram.iter().sum();
    if total == 0 {
        return false;
    }
    let mut counts: Vec<usize> = histogram.to_vec();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    // largest code set that is still "fewer than 5%" of the codebook
    let few = (histogram.len() * 5).div_ceil(100).saturating_sub(1).max(1);
    let covered: usize = counts.iter().take(few).sum();
    covered * 10 >= total * 9
}
