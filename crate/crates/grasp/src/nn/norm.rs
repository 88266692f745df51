use ndarray::{Array1, Axis, Ix1};

use super::{join, Param, Parameters, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization with learnable scale and shift.
///
/// Training normalizes with batch statistics and updates the running
/// estimates (`running = (1 - m) running + m batch`, unbiased variance);
/// evaluation uses the running estimates only.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub channels: usize,
    cache: Option<(Tensor, Array1<f64>)>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::zeros(&[channels]),
            running_mean: Param::buffer(&[channels], 0.0),
            running_var: Param::buffer(&[channels], 1.0),
            channels,
            cache: None,
        }
    }

    fn vec(p: &Param) -> ndarray::ArrayView1<'_, f64> {
        p.value.view().into_dimensionality::<Ix1>().expect("1-d")
    }

    fn affine(&self, xhat: &Tensor) -> Tensor {
        let g = Self::vec(&self.gamma);
        let b = Self::vec(&self.beta);
        let mut y = xhat.clone();
        for (c, mut plane) in y.axis_iter_mut(Axis(1)).enumerate() {
            plane.mapv_inplace(|v| v * g[c] + b[c]);
        }
        y
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let mean = Self::vec(&self.running_mean);
        let var = Self::vec(&self.running_var);
        let mut xhat = x.clone();
        for (c, mut plane) in xhat.axis_iter_mut(Axis(1)).enumerate() {
            let inv = 1.0 / (var[c] + BN_EPS).sqrt();
            plane.mapv_inplace(|v| (v - mean[c]) * inv);
        }
        self.affine(&xhat)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let (n, _, h, w) = x.dim();
        let m = (n * h * w) as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::<f64>::zeros(self.channels);
        for (c, mut plane) in xhat.axis_iter_mut(Axis(1)).enumerate() {
            let mean = plane.sum() / m;
            let var = plane.mapv(|v| (v - mean).powi(2)).sum() / m;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            plane.mapv_inplace(|v| (v - mean) * inv);
            inv_std[c] = inv;

            let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
            let rm = &mut self.running_mean.value[[c]];
            *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean;
            let rv = &mut self.running_var.value[[c]];
            *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * unbiased;
        }
        let y = self.affine(&xhat);
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let (xhat, inv_std) = self.cache.take().expect("backward called without forward_train");
        let (n, _, h, w) = grad.dim();
        let m = (n * h * w) as f64;
        let gamma = Self::vec(&self.gamma).to_owned();
        let mut dx = Tensor::zeros(grad.raw_dim());
        for c in 0..self.channels {
            let g = grad.index_axis(Axis(1), c);
            let xh = xhat.index_axis(Axis(1), c);
            let dbeta = g.sum();
            let dgamma = (&g * &xh).sum();
            self.beta.grad[[c]] += dbeta;
            self.gamma.grad[[c]] += dgamma;
            let k = gamma[c] * inv_std[c] / m;
            let mut out = dx.index_axis_mut(Axis(1), c);
            ndarray::Zip::from(&mut out)
                .and(&g)
                .and(&xh)
                .for_each(|o, &gv, &xv| *o = k * (m * gv - dbeta - xv * dgamma));
        }
        dx
    }
}

impl Parameters for BatchNorm2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }
}
