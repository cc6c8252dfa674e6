use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::Tensor3;

/// Named weight tensor stored as little-endian-serializable `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Param {
    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// He-uniform with bound `sqrt(6 / fan_in)`.
    pub fn he_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt() as f32;
        let n = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub(crate) type ParamRefs<'a> = Vec<(String, &'a Param)>;
pub(crate) type ParamMuts<'a> = Vec<(String, &'a mut Param)>;

/// Square-kernel convolution with `kernel / 2` zero padding and no bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Param,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Param::he_uniform(vec![out_channels, in_channels, kernel, kernel], fan_in, rng),
        }
    }

    pub fn output_len(&self, n: usize) -> usize {
        let pad = self.kernel / 2;
        (n + 2 * pad - self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        let (k, s, pad) = (self.kernel, self.stride, self.kernel / 2);
        let fo = self.output_len(x.freq);
        let to = self.output_len(x.time);
        let rows = self.in_channels * k * k;
        let cols_n = fo * to;
        let mut cols = vec![0.0f32; rows * cols_n];
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                    for of in 0..fo {
                        let f = (of * s + ki) as isize - pad as isize;
                        if f < 0 || f >= x.freq as isize {
                            continue;
                        }
                        let src = x.series(c, f as usize);
                        let out = &mut dst[of * to..(of + 1) * to];
                        for (ot, slot) in out.iter_mut().enumerate() {
                            let t = (ot * s + kj) as isize - pad as isize;
                            if t >= 0 && (t as usize) < x.time {
                                *slot = src[t as usize];
                            }
                        }
                    }
                }
            }
        }
        let w = ArrayView2::from_shape((self.out_channels, rows), &self.weight.data)
            .expect("weight shape");
        let cols = Array2::from_shape_vec((rows, cols_n), cols).expect("im2col shape");
        let out = w.dot(&cols);
        let data = out.into_raw_vec_and_offset().0;
        Tensor3 {
            channels: self.out_channels,
            freq: fo,
            time: to,
            data,
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((format!("{prefix}.weight"), &self.weight));
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
    }
}

/// Per-channel normalization over (frequency, time) of the sample itself,
/// followed by a learnable affine map. Statistics never depend on a batch.
#[derive(Debug, Clone)]
pub struct ChannelNorm {
    pub weight: Param,
    pub bias: Param,
}

impl ChannelNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            weight: Param::filled(vec![channels], 1.0),
            bias: Param::filled(vec![channels], 0.0),
        }
    }

    pub fn forward_inplace(&self, x: &mut Tensor3) {
        for c in 0..x.channels {
            let (g, b) = (self.weight.data[c], self.bias.data[c]);
            let chan = x.channel_mut(c);
            let n = chan.len() as f64;
            let mean = chan.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let var = chan
                .iter()
                .map(|&v| (f64::from(v) - mean).powi(2))
                .sum::<f64>()
                / n;
            let scale = (1.0 / (var + Self::EPS).sqrt()) as f32;
            let mean = mean as f32;
            for v in chan.iter_mut() {
                *v = (*v - mean) * scale * g + b;
            }
        }
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

fn relu_inplace(x: &mut Tensor3) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Two 3×3 convolutions with normalization, plus an identity or strided 1×1
/// projection shortcut.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub conv1: Conv2d,
    pub norm1: ChannelNorm,
    pub conv2: Conv2d,
    pub norm2: ChannelNorm,
    pub shortcut: Option<(Conv2d, ChannelNorm)>,
}

impl BasicBlock {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let conv1 = Conv2d::new(in_ch, out_ch, 3, stride, rng);
        let conv2 = Conv2d::new(out_ch, out_ch, 3, 1, rng);
        let shortcut = (stride != 1 || in_ch != out_ch)
            .then(|| (Conv2d::new(in_ch, out_ch, 1, stride, rng), ChannelNorm::new(out_ch)));
        Self {
            conv1,
            norm1: ChannelNorm::new(out_ch),
            conv2,
            norm2: ChannelNorm::new(out_ch),
            shortcut,
        }
    }

    pub fn forward(&self, x: &Tensor3) -> Tensor3 {
        let mut h = self.conv1.forward(x);
        self.norm1.forward_inplace(&mut h);
        relu_inplace(&mut h);
        let mut h = self.conv2.forward(&h);
        self.norm2.forward_inplace(&mut h);
        match &self.shortcut {
            Some((conv, norm)) => {
                let mut s = conv.forward(x);
                norm.forward_inplace(&mut s);
                h.data.iter_mut().zip(&s.data).for_each(|(a, b)| *a += b);
            }
            None => h.data.iter_mut().zip(&x.data).for_each(|(a, b)| *a += b),
        }
        relu_inplace(&mut h);
        h
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        self.conv1.collect(&format!("{prefix}.conv1"), out);
        self.norm1.collect(&format!("{prefix}.norm1"), out);
        self.conv2.collect(&format!("{prefix}.conv2"), out);
        self.norm2.collect(&format!("{prefix}.norm2"), out);
        if let Some((conv, norm)) = &self.shortcut {
            conv.collect(&format!("{prefix}.shortcut.conv"), out);
            norm.collect(&format!("{prefix}.shortcut.norm"), out);
        }
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        self.conv1.collect_mut(&format!("{prefix}.conv1"), out);
        self.norm1.collect_mut(&format!("{prefix}.norm1"), out);
        self.conv2.collect_mut(&format!("{prefix}.conv2"), out);
        self.norm2.collect_mut(&format!("{prefix}.norm2"), out);
        if let Some((conv, norm)) = &mut self.shortcut {
            conv.collect_mut(&format!("{prefix}.shortcut.conv"), out);
            norm.collect_mut(&format!("{prefix}.shortcut.norm"), out);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: Param::he_uniform(vec![out_dim, in_dim], in_dim, rng),
            bias: Param::filled(vec![out_dim], 0.0),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim, "linear input width");
        self.weight
            .data
            .chunks_exact(self.in_dim)
            .zip(&self.bias.data)
            .map(|(row, &b)| {
                row.iter().zip(x).map(|(&w, &v)| f64::from(w) * v).sum::<f64>() + f64::from(b)
            })
            .collect()
    }

    pub(crate) fn collect<'a>(&'a self, prefix: &str, out: &mut ParamRefs<'a>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    pub(crate) fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamMuts<'a>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}
