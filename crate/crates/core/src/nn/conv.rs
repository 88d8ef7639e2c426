//! 2-D convolution with "same"-style padding (`kernel / 2`) lowered to GEMM.

use rand::Rng;

use super::tensor::{matmul, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `out x in x k x k`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Uniform in `+-sqrt(6 / fan_in)`, zero bias.
    pub fn init(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let mut conv = Self::zeros(in_channels, out_channels, kernel, stride);
        let bound = (6.0 / (in_channels * kernel * kernel) as f64).sqrt();
        for w in &mut conv.weight {
            *w = T::of(rng.gen_range(-bound..bound));
        }
        conv
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        let p = self.padding();
        (
            (height + 2 * p - self.kernel) / self.stride + 1,
            (width + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Unfolds `input` into a `(in * k * k) x (oh * ow)` patch matrix.
    fn im2col(&self, input: &Tensor<T>, oh: usize, ow: usize) -> Vec<T> {
        let (k, s, p) = (self.kernel, self.stride, self.padding() as isize);
        let pixels = oh * ow;
        let mut cols = vec![T::zero(); self.patch_len() * pixels];
        for c in 0..self.in_channels {
            let plane = input.plane(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * pixels..(row + 1) * pixels];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= input.height as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * input.width..][..input.width];
                        let out = &mut dst[oy * ow..(oy + 1) * ow];
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < input.width as isize {
                                *o = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Folds a patch-matrix gradient back onto the input grid (adjoint of `im2col`).
    fn col2im(&self, cols: &[T], height: usize, width: usize, oh: usize, ow: usize) -> Tensor<T> {
        let (k, s, p) = (self.kernel, self.stride, self.padding() as isize);
        let pixels = oh * ow;
        let mut out = Tensor::zeros(self.in_channels, height, width);
        for c in 0..self.in_channels {
            let plane = out.plane_mut(c);
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * pixels..(row + 1) * pixels];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= height as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * width..][..width];
                        for (ox, &g) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < width as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns the output and the patch matrix needed by [`Conv2d::backward`].
    pub fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
        assert_eq!(input.channels, self.in_channels, "conv input channels");
        let (oh, ow) = self.output_size(input.height, input.width);
        let cols = self.im2col(input, oh, ow);
        let pixels = oh * ow;
        let mut out = Tensor::zeros(self.out_channels, oh, ow);
        for (o, &b) in self.bias.iter().enumerate() {
            out.plane_mut(o).iter_mut().for_each(|v| *v = b);
        }
        matmul(
            self.out_channels,
            self.patch_len(),
            pixels,
            &self.weight,
            false,
            &cols,
            false,
            T::one(),
            &mut out.data,
        );
        (out, cols)
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input gradient.
    pub fn backward(
        &self,
        cols: &[T],
        input_height: usize,
        input_width: usize,
        d_out: &Tensor<T>,
        grad: &mut Conv2d<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let pixels = d_out.plane_len();
        let r = self.patch_len();
        matmul(self.out_channels, pixels, r, &d_out.data, false, cols, true, T::one(), &mut grad.weight);
        for (o, b) in grad.bias.iter_mut().enumerate() {
            *b += d_out.plane(o).iter().copied().sum::<T>();
        }
        if !need_input_grad {
            return None;
        }
        let mut d_cols = vec![T::zero(); r * pixels];
        matmul(r, self.out_channels, pixels, &self.weight, true, &d_out.data, false, T::zero(), &mut d_cols);
        Some(self.col2im(&d_cols, input_height, input_width, d_out.height, d_out.width))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Direct definition: out[o,y,x] = b[o] + sum w[o,i,ky,kx] in[i, y*s+ky-p, x*s+kx-p].
    fn direct(conv: &Conv2d<f64>, input: &Tensor<f64>) -> Tensor<f64> {
        let (oh, ow) = conv.output_size(input.height, input.width);
        let (k, s, p) = (conv.kernel, conv.stride, conv.padding() as isize);
        let mut out = Tensor::zeros(conv.out_channels, oh, ow);
        for o in 0..conv.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = conv.bias[o];
                    for i in 0..conv.in_channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * s + ky) as isize - p;
                                let ix = (x * s + kx) as isize - p;
                                if iy >= 0 && ix >= 0 && (iy as usize) < input.height && (ix as usize) < input.width {
                                    acc += conv.weight[((o * conv.in_channels + i) * k + ky) * k + kx]
                                        * input.data[(i * input.height + iy as usize) * input.width + ix as usize];
                                }
                            }
                        }
                    }
                    out.data[(o * oh + y) * ow + x] = acc;
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn forward_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(ic, oc, k, s, h, w) in &[(1, 3, 5, 2, 8, 8), (2, 2, 3, 1, 5, 7), (3, 1, 1, 1, 4, 4), (2, 4, 3, 2, 6, 10)] {
            let mut conv = Conv2d::<f64>::init(ic, oc, k, s, &mut rng);
            conv.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
            let x = random_tensor(&mut rng, ic, h, w);
            let (got, _) = conv.forward(&x);
            let want = direct(&conv, &x);
            assert_eq!((got.channels, got.height, got.width), (want.channels, want.height, want.width));
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_halves_even_sizes() {
        for k in [1, 3, 5, 7] {
            let conv = Conv2d::<f32>::zeros(1, 1, k, 2);
            assert_eq!(conv.output_size(64, 128), (32, 64));
        }
    }

    #[test]
    fn single_layer_finite_differences() {
        // 3x3 conv on a 4x4 input, loss = <out, r>.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::<f64>::init(2, 3, 3, 1, &mut rng);
        conv.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
        let x = random_tensor(&mut rng, 2, 4, 4);
        let r = random_tensor(&mut rng, 3, 4, 4);
        let loss = |c: &Conv2d<f64>, x: &Tensor<f64>| -> f64 {
            c.forward(x).0.data.iter().zip(&r.data).map(|(a, b)| a * b).sum()
        };
        let (_, cols) = conv.forward(&x);
        let mut grad = Conv2d::zeros(2, 3, 3, 1);
        let dx = conv.backward(&cols, 4, 4, &r, &mut grad, true).unwrap();
        let h = 1e-6;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for i in 0..conv.weight.len() {
            let (mut up, mut dn) = (conv.clone(), conv.clone());
            up.weight[i] += h;
            dn.weight[i] -= h;
            let num = (loss(&up, &x) - loss(&dn, &x)) / (2.0 * h);
            assert!(rel(grad.weight[i], num) < 1e-4);
        }
        for i in 0..conv.bias.len() {
            let (mut up, mut dn) = (conv.clone(), conv.clone());
            up.bias[i] += h;
            dn.bias[i] -= h;
            let num = (loss(&up, &x) - loss(&dn, &x)) / (2.0 * h);
            assert!(rel(grad.bias[i], num) < 1e-4);
        }
        for i in 0..x.data.len() {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up.data[i] += h;
            dn.data[i] -= h;
            let num = (loss(&conv, &up) - loss(&conv, &dn)) / (2.0 * h);
            assert!(rel(dx.data[i], num) < 1e-4);
        }
    }

    #[test]
    fn strided_input_gradient_is_adjoint() {
        // <conv(x) - b, r> == <x, dx> for a linear map.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let conv = Conv2d::<f64>::init(2, 3, 5, 2, &mut rng);
        let x = random_tensor(&mut rng, 2, 8, 8);
        let (y, cols) = conv.forward(&x);
        let r = random_tensor(&mut rng, 3, y.height, y.width);
        let mut grad = Conv2d::zeros(2, 3, 5, 2);
        let dx = conv.backward(&cols, 8, 8, &r, &mut grad, true).unwrap();
        let lhs: f64 = y.data.iter().zip(&r.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}
