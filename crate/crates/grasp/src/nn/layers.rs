use ndarray::{s, Array4, Axis, Zip};
use rand::Rng;

use super::Tensor;

#[derive(Clone, Debug, Default)]
pub struct Relu {
    mask: Option<Array4<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.mapv(|v| v.max(0.0))
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.mapv(|v| v > 0.0));
        self.forward(x)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mask = self.mask.take().expect("backward called without forward_train");
        let mut g = grad.clone();
        Zip::from(&mut g).and(&mask).for_each(|g, &m| {
            if !m {
                *g = 0.0;
            }
        });
        g
    }
}

/// Inverted dropout: surviving activations are scaled by `1 / (1 - p)` so
/// that evaluation is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
    mask: Option<Tensor>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        Self {
            p: p.clamp(0.0, 0.99),
            mask: None,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    pub fn forward_train<R: Rng + ?Sized>(&mut self, x: &Tensor, rng: &mut R) -> Tensor {
        if self.p == 0.0 {
            self.mask = Some(Tensor::ones(x.raw_dim()));
            return x.clone();
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask = Tensor::from_shape_simple_fn(x.raw_dim(), || if rng.random::<f64>() < self.p { 0.0 } else { keep });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let mask = self.mask.take().expect("backward called without forward_train");
        grad * &mask
    }
}

/// 3x3 max pooling, stride 1, padding 1 (padding never wins).
#[derive(Clone, Debug, Default)]
pub struct MaxPool3 {
    /// Flat index within the plane of the winning input for each output.
    argmax: Option<Array4<usize>>,
}

impl MaxPool3 {
    pub fn new() -> Self {
        Self::default()
    }

    fn pool(x: &Tensor) -> (Tensor, Array4<usize>) {
        let (n, c, h, w) = x.dim();
        let mut y = Tensor::zeros((n, c, h, w));
        let mut arg = Array4::<usize>::zeros((n, c, h, w));
        for b in 0..n {
            for ch in 0..c {
                let plane = x.slice(s![b, ch, .., ..]);
                for i in 0..h {
                    for j in 0..w {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = i * w + j;
                        for r in i.saturating_sub(1)..(i + 2).min(h) {
                            for q in j.saturating_sub(1)..(j + 2).min(w) {
                                let v = plane[[r, q]];
                                if v > best {
                                    best = v;
                                    at = r * w + q;
                                }
                            }
                        }
                        y[[b, ch, i, j]] = best;
                        arg[[b, ch, i, j]] = at;
                    }
                }
            }
        }
        (y, arg)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        Self::pool(x).0
    }

    pub fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let (y, arg) = Self::pool(x);
        self.argmax = Some(arg);
        y
    }

    pub fn backward(&mut self, grad: &Tensor) -> Tensor {
        let arg = self.argmax.take().expect("backward called without forward_train");
        let (n, c, h, w) = grad.dim();
        let mut dx = Tensor::zeros((n, c, h, w));
        for b in 0..n {
            for ch in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let at = arg[[b, ch, i, j]];
                        dx[[b, ch, at / w, at % w]] += grad[[b, ch, i, j]];
                    }
                }
            }
        }
        dx
    }
}

/// Stacks tensors along the channel axis.
pub fn concat_channels(parts: &[Tensor]) -> Tensor {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("parts share batch and spatial size")
}

/// Splits along channels into consecutive blocks of the given widths.
pub fn split_channels(x: &Tensor, widths: &[usize]) -> Vec<Tensor> {
    assert_eq!(
        widths.iter().sum::<usize>(),
        x.dim().1,
        "widths must cover all channels"
    );
    let mut start = 0;
    widths
        .iter()
        .map(|&w| {
            let part = x.slice(s![.., start..start + w, .., ..]).to_owned();
            start += w;
            part
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tests::{check_input_grad, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // keep values away from the kink
        let x = random_tensor((2, 2, 4, 4), &mut rng).mapv(|v| if v.abs() < 0.05 { 0.3 } else { v });
        check_input_grad(
            &x,
            |m: &mut Relu, x| m.forward_train(x),
            |m, g| m.backward(g),
            &mut Relu::new(),
        );
    }

    #[test]
    fn maxpool_values_and_gradient() {
        let x = Tensor::from_shape_fn((1, 1, 3, 3), |(_, _, i, j)| (i * 3 + j) as f64);
        let y = MaxPool3::new().forward(&x);
        assert_eq!(y[[0, 0, 0, 0]], 4.0);
        assert_eq!(y[[0, 0, 1, 1]], 8.0);
        assert_eq!(y[[0, 0, 2, 0]], 7.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor((2, 2, 5, 5), &mut rng);
        check_input_grad(
            &x,
            |m: &mut MaxPool3, x| m.forward_train(x),
            |m, g| m.backward(g),
            &mut MaxPool3::new(),
        );
    }

    #[test]
    fn dropout_is_identity_in_eval_and_unbiased_in_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = Dropout::new(0.1);
        let x = Tensor::ones((4, 8, 32, 32));
        assert_eq!(d.forward(&x), x);
        let y = d.forward_train(&x, &mut rng);
        let mean = y.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((zeros - 0.1).abs() < 0.01, "{zeros}");
        let g = d.backward(&x);
        assert_eq!(g, y);
    }

    #[test]
    fn dropout_is_reproducible_under_seed() {
        let x = Tensor::ones((1, 2, 8, 8));
        let a = Dropout::new(0.5).forward_train(&x, &mut ChaCha8Rng::seed_from_u64(9));
        let b = Dropout::new(0.5).forward_train(&x, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn concat_then_split_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tensor((2, 3, 4, 4), &mut rng);
        let b = random_tensor((2, 5, 4, 4), &mut rng);
        let cat = concat_channels(&[a.clone(), b.clone()]);
        assert_eq!(cat.dim(), (2, 8, 4, 4));
        let parts = split_channels(&cat, &[3, 5]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
