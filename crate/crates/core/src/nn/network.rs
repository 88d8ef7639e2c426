//! Residual feature network: a fully convolutional stack mapping a grayscale
//! image to a single-channel feature map at a quarter of the input size.
//!
//! Layout: a stem of `conv -> instance norm -> ReLU` layers (the first two
//! with stride 2), residual blocks of
//! `conv -> IN -> ReLU -> conv -> IN -> (+ skip) -> ReLU`, and a linear
//! convolutional head with one output channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conv::Conv2d;
use super::norm::{instance_norm, instance_norm_backward, NormCache};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::input::InputImage;
use crate::map::FeatureMap;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StemLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture descriptor; also the `[network]` section of experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub stem: Vec<StemLayer>,
    pub residual_blocks: usize,
    pub block_kernel: usize,
    pub head_kernel: usize,
    pub norm_epsilon: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::reference()
    }
}

impl Architecture {
    /// Desk-scale network: 16 and 32 channel stem, four 32-channel blocks.
    pub fn reference() -> Self {
        Self {
            stem: vec![
                StemLayer {
                    channels: 16,
                    kernel: 5,
                    stride: 2,
                },
                StemLayer {
                    channels: 32,
                    kernel: 3,
                    stride: 2,
                },
            ],
            residual_blocks: 4,
            block_kernel: 3,
            head_kernel: 1,
            norm_epsilon: 1e-5,
        }
    }

    /// Roughly 5.1M parameters: 64/128 channel stem and 17 blocks of width 128.
    pub fn large() -> Self {
        Self {
            stem: vec![
                StemLayer {
                    channels: 64,
                    kernel: 5,
                    stride: 2,
                },
                StemLayer {
                    channels: 128,
                    kernel: 3,
                    stride: 2,
                },
            ],
            residual_blocks: 17,
            ..Self::reference()
        }
    }

    pub fn block_channels(&self) -> usize {
        self.stem.last().map_or(1, |l| l.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("network: {msg}")));
        if self.stem.len() < 2 {
            return bad("the stem needs at least two layers".into());
        }
        for (i, layer) in self.stem.iter().enumerate() {
            let want = if i < 2 { 2 } else { 1 };
            if layer.stride != want {
                return bad(format!("stem layer {i} must have stride {want}"));
            }
            if layer.kernel % 2 == 0 || layer.channels == 0 {
                return bad(format!("stem layer {i} needs an odd kernel and channels > 0"));
            }
        }
        if self.block_kernel % 2 == 0 || self.head_kernel % 2 == 0 {
            return bad("block and head kernels must be odd".into());
        }
        if !(self.norm_epsilon > 0.0) {
            return bad("norm_epsilon must be > 0".into());
        }
        Ok(())
    }
}

/// A convolution followed by instance normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormConv<T> {
    pub conv: Conv2d<T>,
    pub scale: Vec<T>,
    pub offset: Vec<T>,
}

impl<T: Scalar> NormConv<T> {
    fn zeros(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            conv: Conv2d::zeros(in_ch, out_ch, kernel, stride),
            scale: vec![T::zero(); out_ch],
            offset: vec![T::zero(); out_ch],
        }
    }

    fn init(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv: Conv2d::init(in_ch, out_ch, kernel, stride, rng),
            scale: vec![T::one(); out_ch],
            offset: vec![T::zero(); out_ch],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub first: NormConv<T>,
    pub second: NormConv<T>,
}

/// Trainable tensors of the network. The same type holds parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters<T> {
    arch: Architecture,
    pub stem: Vec<NormConv<T>>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub head: Conv2d<T>,
}

struct NormConvCache<T> {
    input_h: usize,
    input_w: usize,
    cols: Vec<T>,
    norms: Vec<NormCache<T>>,
    /// Post-activation output (pre-activation when the layer has no ReLU).
    output: Tensor<T>,
}

struct BlockCache<T> {
    first: NormConvCache<T>,
    second: NormConvCache<T>,
    output: Tensor<T>,
}

/// Activations retained by [`NetworkParameters::forward_cached`].
pub struct ForwardCache<T> {
    stem: Vec<NormConvCache<T>>,
    blocks: Vec<BlockCache<T>>,
    head_cols: Vec<T>,
    head_in: (usize, usize),
    input: (usize, usize),
    output: (usize, usize),
}

/// Gradients returned by [`NetworkParameters::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Backward<T> {
    pub params: NetworkParameters<T>,
    /// `height x width` gradient with respect to the input pixels.
    pub input: Vec<T>,
}

fn relu_in_place<T: Scalar>(t: &mut Tensor<T>) {
    for v in &mut t.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

fn relu_mask<T: Scalar>(grad: &mut Tensor<T>, output: &Tensor<T>) {
    for (g, &o) in grad.data.iter_mut().zip(&output.data) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
}

impl<T: Scalar> NetworkParameters<T> {
    /// Fan-in scaled uniform weights from a seeded generator; unit scale, zero offsets.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::build(arch, |i, o, k, s| NormConv::init(i, o, k, s, &mut rng), |i, o, k| {
            Conv2d::zeros(i, o, k, 1)
        });
        params.head = Conv2d::init(arch.block_channels(), 1, arch.head_kernel, 1, &mut rng);
        Ok(params)
    }

    /// Same shapes as `arch`, every tensor zero.
    pub fn zeros(arch: &Architecture) -> Self {
        Self::build(arch, NormConv::zeros, |i, o, k| Conv2d::zeros(i, o, k, 1))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch)
    }

    fn build(
        arch: &Architecture,
        mut layer: impl FnMut(usize, usize, usize, usize) -> NormConv<T>,
        head: impl FnOnce(usize, usize, usize) -> Conv2d<T>,
    ) -> Self {
        let mut in_ch = 1;
        let stem = arch
            .stem
            .iter()
            .map(|l| {
                let nc = layer(in_ch, l.channels, l.kernel, l.stride);
                in_ch = l.channels;
                nc
            })
            .collect();
        let c = arch.block_channels();
        let blocks = (0..arch.residual_blocks)
            .map(|_| ResidualBlock {
                first: layer(c, c, arch.block_kernel, 1),
                second: layer(c, c, arch.block_kernel, 1),
            })
            .collect();
        Self {
            arch: arch.clone(),
            stem,
            blocks,
            head: head(c, 1, arch.head_kernel),
        }
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    fn norm_convs(&self) -> impl Iterator<Item = &NormConv<T>> {
        self.stem
            .iter()
            .chain(self.blocks.iter().flat_map(|b| [&b.first, &b.second]))
    }

    /// Every trainable tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for nc in self.norm_convs() {
            out.extend([&nc.conv.weight[..], &nc.conv.bias, &nc.scale, &nc.offset]);
        }
        out.extend([&self.head.weight[..], &self.head.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let blocks = self.blocks.iter_mut().flat_map(|b| [&mut b.first, &mut b.second]);
        for nc in self.stem.iter_mut().chain(blocks) {
            out.push(&mut nc.conv.weight);
            out.push(&mut nc.conv.bias);
            out.push(&mut nc.scale);
            out.push(&mut nc.offset);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other`, element-wise.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| *v == T::zero()))
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParameters<U> {
        let mut out = NetworkParameters::<U>::zeros(&self.arch);
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = U::of(s.as_f64()));
        }
        out
    }

    fn check_input(&self, img: &InputImage) -> Result<()> {
        if img.width() % 4 != 0 || img.height() % 4 != 0 {
            return Err(Error::BadDimensions(format!(
                "input {}x{} must be divisible by 4",
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }

    fn norm_conv_forward(&self, nc: &NormConv<T>, x: &Tensor<T>, relu: bool) -> (Tensor<T>, NormConvCache<T>) {
        let (mut y, cols) = nc.conv.forward(x);
        let eps = T::of(self.arch.norm_epsilon);
        let mut norms = Vec::with_capacity(y.channels);
        for c in 0..y.channels {
            let (out, cache) = instance_norm(y.plane(c), nc.scale[c], nc.offset[c], eps);
            y.plane_mut(c).copy_from_slice(&out);
            norms.push(cache);
        }
        if relu {
            relu_in_place(&mut y);
        }
        let cache = NormConvCache {
            input_h: x.height,
            input_w: x.width,
            cols,
            norms,
            output: y.clone(),
        };
        (y, cache)
    }

    fn norm_conv_backward(
        nc: &NormConv<T>,
        cache: &NormConvCache<T>,
        mut d_out: Tensor<T>,
        relu: bool,
        grad: &mut NormConv<T>,
        need_input: bool,
    ) -> Option<Tensor<T>> {
        if relu {
            relu_mask(&mut d_out, &cache.output);
        }
        for c in 0..d_out.channels {
            let (dx, ds, doff) = instance_norm_backward(&cache.norms[c], nc.scale[c], d_out.plane(c));
            d_out.plane_mut(c).copy_from_slice(&dx);
            grad.scale[c] += ds;
            grad.offset[c] += doff;
        }
        nc.conv
            .backward(&cache.cols, cache.input_h, cache.input_w, &d_out, &mut grad.conv, need_input)
    }

    /// Embeds an image; output is `width / 4 x height / 4`.
    pub fn forward(&self, img: &InputImage) -> Result<FeatureMap<T>> {
        Ok(self.forward_cached(img)?.0)
    }

    pub fn forward_cached(&self, img: &InputImage) -> Result<(FeatureMap<T>, ForwardCache<T>)> {
        self.check_input(img)?;
        let mut x = Tensor::from_vec(
            1,
            img.height(),
            img.width(),
            img.pixels().iter().map(|&p| T::of(f64::from(p))).collect(),
        );
        let mut stem = Vec::with_capacity(self.stem.len());
        for nc in &self.stem {
            let (y, cache) = self.norm_conv_forward(nc, &x, true);
            stem.push(cache);
            x = y;
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y1, first) = self.norm_conv_forward(&block.first, &x, true);
            let (mut y2, second) = self.norm_conv_forward(&block.second, &y1, false);
            y2.data.iter_mut().zip(&x.data).for_each(|(a, &b)| *a += b);
            relu_in_place(&mut y2);
            blocks.push(BlockCache {
                first,
                second,
                output: y2.clone(),
            });
            x = y2;
        }
        let head_in = (x.height, x.width);
        let (out, head_cols) = self.head.forward(&x);
        let (oh, ow) = (out.height, out.width);
        let map = FeatureMap::new(ow, oh, out.data).map_err(|_| {
            Error::NumericalDivergence("network produced a non-finite feature".into())
        })?;
        let cache = ForwardCache {
            stem,
            blocks,
            head_cols,
            head_in,
            input: (img.height(), img.width()),
            output: (oh, ow),
        };
        Ok((map, cache))
    }

    /// Accumulates parameter gradients for upstream `d_output` into `grad`;
    /// returns the input gradient when requested.
    pub fn backward_cached(
        &self,
        cache: &ForwardCache<T>,
        d_output: &FeatureMap<T>,
        grad: &mut NetworkParameters<T>,
        need_input: bool,
    ) -> Result<Option<Vec<T>>> {
        let (oh, ow) = cache.output;
        if d_output.dims() != (ow, oh) {
            return Err(Error::BadDimensions(format!(
                "upstream gradient is {}x{}, network output is {ow}x{oh}",
                d_output.width(),
                d_output.height()
            )));
        }
        let d = Tensor::from_vec(1, oh, ow, d_output.values().to_vec());
        let mut dx = self
            .head
            .backward(&cache.head_cols, cache.head_in.0, cache.head_in.1, &d, &mut grad.head, true)
            .expect("input gradient requested");
        for ((block, bc), bg) in self.blocks.iter().zip(&cache.blocks).zip(grad.blocks.iter_mut()).rev() {
            relu_mask(&mut dx, &bc.output);
            let d_mid = Self::norm_conv_backward(&block.second, &bc.second, dx.clone(), false, &mut bg.second, true)
                .expect("input gradient requested");
            let d_in = Self::norm_conv_backward(&block.first, &bc.first, d_mid, true, &mut bg.first, true)
                .expect("input gradient requested");
            dx.data.iter_mut().zip(&d_in.data).for_each(|(a, &b)| *a += b);
        }
        for (i, ((nc, c), g)) in self.stem.iter().zip(&cache.stem).zip(grad.stem.iter_mut()).enumerate().rev() {
            let want = i > 0 || need_input;
            match Self::norm_conv_backward(nc, c, dx, true, g, want) {
                Some(next) => dx = next,
                None => return Ok(None),
            }
        }
        debug_assert_eq!((dx.height, dx.width), cache.input);
        Ok(Some(dx.data))
    }

    /// Parameter and input gradients of `<forward(img), d_output>`.
    pub fn backward(&self, img: &InputImage, d_output: &FeatureMap<T>) -> Result<Backward<T>> {
        let (_, cache) = self.forward_cached(img)?;
        let mut params = self.zeros_like();
        let input = self
            .backward_cached(&cache, d_output, &mut params, true)?
            .expect("input gradient requested");
        Ok(Backward { params, input })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny() -> Architecture {
        Architecture {
            stem: vec![
                StemLayer {
                    channels: 3,
                    kernel: 3,
                    stride: 2,
                },
                StemLayer {
                    channels: 4,
                    kernel: 3,
                    stride: 2,
                },
            ],
            residual_blocks: 1,
            block_kernel: 3,
            head_kernel: 1,
            norm_epsilon: 1e-5,
        }
    }

    fn random_image(seed: u64, w: usize, h: usize) -> InputImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        InputImage::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn quarter_size_output() {
        let p = NetworkParameters::<f32>::init(&Architecture::reference(), 1).unwrap();
        for (w, h) in [(128, 128), (64, 64), (32, 48), (36, 20)] {
            let map = p.forward(&random_image(2, w, h)).unwrap();
            assert_eq!(map.dims(), (w / 4, h / 4));
        }
        assert!(matches!(p.forward(&random_image(2, 30, 32)), Err(Error::BadDimensions(_))));
    }

    #[test]
    fn rejects_invalid_architectures() {
        let mut a = Architecture::reference();
        a.stem[1].stride = 1;
        assert!(a.validate().is_err());
        let mut a = Architecture::reference();
        a.stem.truncate(1);
        assert!(a.validate().is_err());
        let mut a = Architecture::reference();
        a.head_kernel = 2;
        assert!(NetworkParameters::<f32>::init(&a, 0).is_err());
    }

    #[test]
    fn parameter_counts() {
        let p = NetworkParameters::<f32>::zeros(&Architecture::reference());
        // stem 1*16*25+16+32, 16*32*9+32+64; blocks 8*(32*32*9+32+64); head 33
        let expected = 448 + 4704 + 8 * 9312 + 33;
        assert_eq!(p.parameter_count(), expected);
        let large = NetworkParameters::<f32>::zeros(&Architecture::large()).parameter_count();
        assert!((4_900_000..5_400_000).contains(&large), "{large}");
    }

    #[test]
    fn deterministic_forward() {
        let a = NetworkParameters::<f32>::init(&Architecture::reference(), 9).unwrap();
        let b = NetworkParameters::<f32>::init(&Architecture::reference(), 9).unwrap();
        assert_eq!(a, b);
        let img = random_image(3, 32, 32);
        assert_eq!(a.forward(&img).unwrap(), b.forward(&img).unwrap());
    }

    #[test]
    fn zero_image_output_comes_from_offsets_and_bias() {
        // Every normalized channel of a constant input is 0, so each IN emits
        // its offset; with zero offsets the head sees zeros and returns its bias.
        let mut p = NetworkParameters::<f64>::init(&tiny(), 4).unwrap();
        p.head.bias[0] = 0.25;
        let zero = InputImage::new(16, 16, vec![0.0; 256]).unwrap();
        let map = p.forward(&zero).unwrap();
        assert!(map.values().iter().all(|v| *v == 0.25));

        // With offsets set, the first layer's weights still cannot matter.
        for nc in &mut p.stem {
            nc.offset.iter_mut().for_each(|o| *o = 0.5);
        }
        let before = p.forward(&zero).unwrap();
        p.stem[0].conv.weight.iter_mut().for_each(|w| *w *= -3.0);
        assert_eq!(p.forward(&zero).unwrap(), before);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = NetworkParameters::<f64>::init(&tiny(), 5).unwrap();
        let img = random_image(6, 16, 16);
        let g = p.backward(&img, &FeatureMap::zeros(4, 4)).unwrap();
        assert!(g.params.is_zero());
        assert!(g.input.iter().all(|v| *v == 0.0));
        assert!(p.backward(&img, &FeatureMap::zeros(3, 4)).is_err());
    }

    #[test]
    fn end_to_end_directional_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut p = NetworkParameters::<f64>::init(&tiny(), 11).unwrap();
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        let img = random_image(12, 16, 16);
        let r = FeatureMap::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let g = p.backward(&img, &r).unwrap();

        let mut dir = p.zeros_like();
        for t in dir.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        }
        let analytic: f64 = g
            .params
            .tensors()
            .iter()
            .zip(dir.tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y))
            .sum();
        let objective = |q: &NetworkParameters<f64>| -> f64 {
            q.forward(&img).unwrap().values().iter().zip(r.values()).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        let shifted = |sign: f64| {
            let mut q = p.clone();
            for (t, d) in q.tensors_mut().into_iter().zip(dir.tensors()) {
                t.iter_mut().zip(d).for_each(|(v, &dv)| *v += sign * h * dv);
            }
            objective(&q)
        };
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(rel < 1e-4, "{analytic} vs {numeric}");
    }
}
