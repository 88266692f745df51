use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3, Axis, Ix4};
use rand::Rng;

use super::{join, Param, Parameters, Tensor};
use crate::error::{Error, Result};

/// Output length of a strided, padded convolution along one axis.
fn conv_out(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Unfolds `(C, H, W)` into `(C * k * k, Ho * Wo)` patch columns.
pub fn im2col(x: ArrayView3<f64>, k: usize, stride: usize, pad: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let ho = conv_out(h, k, stride, pad).expect("kernel larger than padded input");
    let wo = conv_out(w, k, stride, pad).expect("kernel larger than padded input");
    let mut cols = Array2::<f64>::zeros((c * k * k, ho * wo));
    let out = cols.as_slice_mut().expect("fresh array is contiguous");
    let x_std = x.as_standard_layout();
    let src = x_std.as_slice().expect("standard layout");
    let l = ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut out[row * l..(row + 1) * l];
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let src_row = &src[(ci * h + ih as usize) * w..(ci * h + ih as usize + 1) * w];
                    let dst_row = &mut dst[oh * wo..(oh + 1) * wo];
                    for (ow, d) in dst_row.iter_mut().enumerate() {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        if iw >= 0 && iw < w as isize {
                            *d = src_row[iw as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds patch columns back into a `(C, H, W)` image, summing overlaps.
/// Inverse-shaped partner of [`im2col`] (its adjoint).
pub fn col2im(cols: ArrayView2<f64>, c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Array3<f64> {
    let ho = conv_out(h, k, stride, pad).expect("kernel larger than padded input");
    let wo = conv_out(w, k, stride, pad).expect("kernel larger than padded input");
    assert_eq!(cols.dim(), (c * k * k, ho * wo), "column shape mismatch");
    let mut img = Array3::<f64>::zeros((c, h, w));
    let dst = img.as_slice_mut().expect("fresh array is contiguous");
    let cols_std = cols.as_standard_layout();
    let src = cols_std.as_slice().expect("standard layout");
    let l = ho * wo;
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let col_row = &src[row * l..(row + 1) * l];
                for oh in 0..ho {
                    let ih = (oh * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    let base = (ci * h + ih as usize) * w;
                    for ow in 0..wo {
                        let iw = (ow * stride + kj) as isize - pad as isize;
                        if iw >= 0 && iw < w as isize {
                            dst[base + iw as usize] += col_row[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
    img
}

/// Square-kernel 2-D convolution with bias. Weight shape `(out, in, k, k)`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    /// He-initialized weights (`fan_in = in * k * k`), zero bias.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let shape = [out_channels, in_channels, kernel, kernel];
        Self {
            weight: Param::he_normal(&shape, in_channels * kernel * kernel, rng),
            bias: Param::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride: stride.max(1),
            padding,
            input: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match (
            conv_out(h, self.kernel, self.stride, self.padding),
            conv_out(w, self.kernel, self.stride, self.padding),
        ) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Shape(format!(
                "{h}x{w} input is smaller than a {k}x{k} kernel",
                k = self.kernel
            ))),
        }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.out_channels, self.in_channels * self.kernel * self.kernel))
            .expect("weight is contiguous")
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (ho, wo) = self.output_hw(h, w)?;
        let wm = self.weight_matrix();
        let bias = self
            .bias
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("1-d bias");
        let mut out = Tensor::zeros((n, self.out_channels, ho, wo));
        for b in 0..n {
            let cols = im2col(x.index_axis(Axis(0), b), self.kernel, self.stride, self.padding);
            let mut y = wm.dot(&cols);
            for (mut row, bv) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
                row += *bv;
            }
            out.index_axis_mut(Axis(0), b).assign(
                &y.into_shape_with_order((self.out_channels, ho, wo))
                    .expect("contiguous"),
            );
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.input.take().expect("backward called without forward_train");
        let (n, c, h, w) = x.dim();
        let (_, _, ho, wo) = grad_out.dim();
        let k2 = c * self.kernel * self.kernel;
        let wm = self.weight_matrix().to_owned();
        let mut dw = Array2::<f64>::zeros((self.out_channels, k2));
        let mut db = Array1::<f64>::zeros(self.out_channels);
        let mut dx = Tensor::zeros((n, c, h, w));
        for b in 0..n {
            let g = grad_out
                .index_axis(Axis(0), b)
                .to_owned()
                .into_shape_with_order((self.out_channels, ho * wo))
                .expect("contiguous");
            let cols = im2col(x.index_axis(Axis(0), b), self.kernel, self.stride, self.padding);
            dw += &g.dot(&cols.t());
            db += &g.sum_axis(Axis(1));
            let dcols = wm.t().dot(&g);
            dx.index_axis_mut(Axis(0), b).assign(&col2im(
                dcols.view(),
                c,
                h,
                w,
                self.kernel,
                self.stride,
                self.padding,
            ));
        }
        let dw = dw.into_shape_with_order(self.weight.grad.raw_dim()).expect("same size");
        self.weight.grad += &dw;
        self.bias.grad += &db.into_dyn();
        dx
    }
}

impl Parameters for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Transposed convolution (the adjoint of [`Conv2d`] in its input).
/// Weight shape `(in, out, k, k)`; output size `(H - 1) s - 2p + k`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    /// He-initialized with `fan_in = in * k * k / stride^2`, the average
    /// number of inputs reaching one output pixel.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let stride = stride.max(1);
        let shape = [in_channels, out_channels, kernel, kernel];
        let fan_in = (in_channels * kernel * kernel / (stride * stride)).max(1);
        Self {
            weight: Param::he_normal(&shape, fan_in, rng),
            bias: Param::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            input: None,
        }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let grow = |len: usize| {
            ((len.max(1) - 1) * self.stride + self.kernel)
                .checked_sub(2 * self.padding)
                .filter(|&v| v > 0 && len > 0)
        };
        match (grow(h), grow(w)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(Error::Shape(format!("transposed conv cannot map a {h}x{w} input"))),
        }
    }

    fn weight_matrix(&self) -> ArrayView2<'_, f64> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.in_channels, self.out_channels * self.kernel * self.kernel))
            .expect("weight is contiguous")
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dim();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "transposed conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (ho, wo) = self.output_hw(h, w)?;
        let wm = self.weight_matrix();
        let bias = self
            .bias
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .expect("1-d bias");
        let mut out = Tensor::zeros((n, self.out_channels, ho, wo));
        for b in 0..n {
            let xb = x
                .index_axis(Axis(0), b)
                .to_owned()
                .into_shape_with_order((c, h * w))
                .expect("contiguous");
            let cols = wm.t().dot(&xb);
            let mut y = col2im(
                cols.view(),
                self.out_channels,
                ho,
                wo,
                self.kernel,
                self.stride,
                self.padding,
            );
            for (mut plane, bv) in y.axis_iter_mut(Axis(0)).zip(bias.iter()) {
                plane += *bv;
            }
            out.index_axis_mut(Axis(0), b).assign(&y);
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = self.forward(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.input.take().expect("backward called without forward_train");
        let (n, c, h, w) = x.dim();
        let wm = self.weight_matrix().to_owned();
        let mut dw = Array2::<f64>::zeros(wm.dim());
        let mut db = Array1::<f64>::zeros(self.out_channels);
        let mut dx = Tensor::zeros((n, c, h, w));
        for b in 0..n {
            let g = grad_out.index_axis(Axis(0), b);
            db += &g.sum_axis(Axis(2)).sum_axis(Axis(1));
            let gcols = im2col(g, self.kernel, self.stride, self.padding);
            let xb = x
                .index_axis(Axis(0), b)
                .to_owned()
                .into_shape_with_order((c, h * w))
                .expect("contiguous");
            dw += &xb.dot(&gcols.t());
            let dxb = wm.dot(&gcols);
            dx.index_axis_mut(Axis(0), b)
                .assign(&dxb.into_shape_with_order((c, h, w)).expect("contiguous"));
        }
        let dw = dw.into_shape_with_order(self.weight.grad.raw_dim()).expect("same size");
        self.weight.grad += &dw;
        self.bias.grad += &db.into_dyn();
        dx
    }
}

impl Parameters for ConvTranspose2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// Weight tensor viewed as 4-D, for tests and tooling.
pub fn weight4(p: &Param) -> ndarray::ArrayView4<'_, f64> {
    p.value.view().into_dimensionality::<Ix4>().expect("4-d weight")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::{check_input_grad, check_param_grads, random_tensor};
    use ndarray::s;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution, independent of im2col.
    fn naive_conv(x: &Tensor, conv: &Conv2d) -> Tensor {
        let (n, c, h, w) = x.dim();
        let (ho, wo) = conv.output_hw(h, w).unwrap();
        let wt = weight4(&conv.weight);
        let mut y = Tensor::zeros((n, conv.out_channels, ho, wo));
        for b in 0..n {
            for o in 0..conv.out_channels {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = conv.bias.value[[o]];
                        for ci in 0..c {
                            for ki in 0..conv.kernel {
                                for kj in 0..conv.kernel {
                                    let r = (i * conv.stride + ki) as isize - conv.padding as isize;
                                    let q = (j * conv.stride + kj) as isize - conv.padding as isize;
                                    if r >= 0 && q >= 0 && (r as usize) < h && (q as usize) < w {
                                        acc += wt[[o, ci, ki, kj]] * x[[b, ci, r as usize, q as usize]];
                                    }
                                }
                            }
                        }
                        y[[b, o, i, j]] = acc;
                    }
                }
            }
        }
        y
    }

    /// Scatter definition of a transposed convolution.
    fn naive_conv_t(x: &Tensor, conv: &ConvTranspose2d) -> Tensor {
        let (n, c, h, w) = x.dim();
        let (ho, wo) = conv.output_hw(h, w).unwrap();
        let wt = weight4(&conv.weight);
        let mut y = Tensor::zeros((n, conv.out_channels, ho, wo));
        for b in 0..n {
            for o in 0..conv.out_channels {
                y.slice_mut(s![b, o, .., ..]).fill(conv.bias.value[[o]]);
            }
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        for o in 0..conv.out_channels {
                            for ki in 0..conv.kernel {
                                for kj in 0..conv.kernel {
                                    let r = (i * conv.stride + ki) as isize - conv.padding as isize;
                                    let q = (j * conv.stride + kj) as isize - conv.padding as isize;
                                    if r >= 0 && q >= 0 && (r as usize) < ho && (q as usize) < wo {
                                        y[[b, o, r as usize, q as usize]] += wt[[ci, o, ki, kj]] * x[[b, ci, i, j]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(k, s, p) in &[(3, 1, 1), (4, 2, 1), (5, 1, 2), (1, 1, 0), (9, 1, 4)] {
            let mut conv = Conv2d::new(3, 4, k, s, p, &mut rng);
            conv.bias
                .value
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-1.0..1.0));
            let x = random_tensor((2, 3, 10, 12), &mut rng);
            let fast = conv.forward(&x).unwrap();
            let slow = naive_conv(&x, &conv);
            assert_eq!(fast.dim(), slow.dim());
            assert!((&fast - &slow).iter().all(|d| d.abs() < 1e-10), "k={k} s={s} p={p}");
        }
    }

    #[test]
    fn conv_transpose_matches_scatter_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(k, s, p) in &[(4, 2, 1), (3, 1, 1), (9, 1, 4), (2, 2, 0)] {
            let mut conv = ConvTranspose2d::new(3, 2, k, s, p, &mut rng);
            conv.bias
                .value
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-1.0..1.0));
            let x = random_tensor((2, 3, 5, 6), &mut rng);
            let fast = conv.forward(&x).unwrap();
            let slow = naive_conv_t(&x, &conv);
            assert_eq!(fast.dim(), slow.dim());
            assert!((&fast - &slow).iter().all(|d| d.abs() < 1e-10), "k={k} s={s} p={p}");
        }
    }

    #[test]
    fn stride_two_pairs_restore_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let down = Conv2d::new(1, 1, 4, 2, 1, &mut rng);
        let up = ConvTranspose2d::new(1, 1, 4, 2, 1, &mut rng);
        assert_eq!(down.output_hw(224, 224).unwrap(), (112, 112));
        assert_eq!(up.output_hw(112, 112).unwrap(), (224, 224));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut conv = Conv2d::new(2, 3, 4, 2, 1, &mut rng);
        let x = random_tensor((2, 2, 6, 6), &mut rng);
        check_input_grad(
            &x,
            |m: &mut Conv2d, x| m.forward_train(x).unwrap(),
            |m, g| m.backward(g),
            &mut conv,
        );
        check_param_grads(
            &x,
            |m: &mut Conv2d, x| m.forward_train(x).unwrap(),
            |m, g| m.backward(g),
            &mut conv,
        );
    }

    #[test]
    fn conv_transpose_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = ConvTranspose2d::new(3, 2, 4, 2, 1, &mut rng);
        let x = random_tensor((2, 3, 4, 4), &mut rng);
        check_input_grad(
            &x,
            |m: &mut ConvTranspose2d, x| m.forward_train(x).unwrap(),
            |m, g| m.backward(g),
            &mut conv,
        );
        check_param_grads(
            &x,
            |m: &mut ConvTranspose2d, x| m.forward_train(x).unwrap(),
            |m, g| m.backward(g),
            &mut conv,
        );
    }

    #[test]
    fn wrong_channels_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let conv = Conv2d::new(4, 8, 3, 1, 1, &mut rng);
        assert!(matches!(
            conv.forward(&Tensor::zeros((1, 3, 5, 5))),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn he_init_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conv = Conv2d::new(64, 128, 4, 2, 1, &mut rng);
        let n = conv.weight.len() as f64;
        assert!(n >= 1e5);
        let mean = conv.weight.value.sum() / n;
        let std = (conv.weight.value.mapv(|v| (v - mean).powi(2)).sum() / n).sqrt();
        let target = (2.0f64 / (64.0 * 16.0)).sqrt();
        assert!((std / target - 1.0).abs() < 0.05, "{std} vs {target}");
        assert!(mean.abs() < 0.05 * target);
        assert!(conv.bias.value.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn parameter_count_of_small_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let conv = Conv2d::new(4, 8, 3, 1, 1, &mut rng);
        assert_eq!(crate::nn::count_params(&conv), 296);
    }
}
