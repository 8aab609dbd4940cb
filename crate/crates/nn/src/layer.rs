use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::real::{matmul, Real};
use crate::tensor::Tensor;
use crate::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Output keeps the input's spatial size (zero padding, stride 1).
    Same,
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
}

/// Declarative description of one layer. Samples are laid out as `[H, W, C]`
/// for spatial layers and `[N]` for dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        padding: Padding,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    MaxPool {
        size: [usize; 2],
    },
    Relu,
    Sigmoid,
    Flatten,
    Dropout {
        rate: f32,
    },
    BatchNorm {
        channels: usize,
        momentum: f32,
        epsilon: f32,
    },
}

impl LayerSpec {
    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: [usize; 2], padding: Padding) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            padding,
        }
    }

    pub fn dense(inputs: usize, units: usize) -> Self {
        LayerSpec::Dense { inputs, units }
    }

    pub fn max_pool(size: [usize; 2]) -> Self {
        LayerSpec::MaxPool { size }
    }

    pub fn dropout(rate: f32) -> Self {
        LayerSpec::Dropout { rate }
    }

    /// Batch normalization over the last axis with momentum 0.9, epsilon 1e-3.
    pub fn batch_norm(channels: usize) -> Self {
        LayerSpec::BatchNorm {
            channels,
            momentum: 0.9,
            epsilon: 1e-3,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => format!("conv2d({in_channels}->{out_channels}, {}x{})", kernel[0], kernel[1]),
            LayerSpec::Dense { inputs, units } => format!("dense({inputs}->{units})"),
            LayerSpec::MaxPool { size } => format!("maxpool({}x{})", size[0], size[1]),
            LayerSpec::Relu => "relu".into(),
            LayerSpec::Sigmoid => "sigmoid".into(),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Dropout { rate } => format!("dropout({rate})"),
            LayerSpec::BatchNorm { channels, .. } => format!("batchnorm({channels})"),
        }
    }

    /// Checks that the kind-specific parameters are complete and in range.
    pub(crate) fn validate(&self) -> Result<(), String> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } if *in_channels == 0 || *out_channels == 0 || kernel.contains(&0) => {
                Err("conv2d channels and kernel must be non-zero".into())
            }
            LayerSpec::Dense { inputs, units } if *inputs == 0 || *units == 0 => {
                Err("dense sizes must be non-zero".into())
            }
            LayerSpec::MaxPool { size } if size.contains(&0) => Err("pool size must be non-zero".into()),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(rate) => {
                Err(format!("dropout rate {rate} outside [0, 1)"))
            }
            LayerSpec::BatchNorm {
                channels,
                momentum,
                epsilon,
            } if *channels == 0 || !(0.0..1.0).contains(momentum) || *epsilon <= 0.0 => {
                Err("batchnorm needs channels > 0, momentum in [0,1), epsilon > 0".into())
            }
            _ => Ok(()),
        }
    }

    /// Channel count this layer produces, when it fixes one.
    pub(crate) fn produced_channels(&self) -> Option<usize> {
        match self {
            LayerSpec::Conv2d { out_channels, .. } => Some(*out_channels),
            LayerSpec::Dense { units, .. } => Some(*units),
            _ => None,
        }
    }

    pub(crate) fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
            } => {
                let [h, w, c] = spatial(input)?;
                if c != *in_channels {
                    return Err(format!("expects {in_channels} input channels, receives {c}"));
                }
                let (ho, wo) = match padding {
                    Padding::Same => (h, w),
                    Padding::Valid => {
                        if h < kernel[0] || w < kernel[1] {
                            return Err(format!("kernel {kernel:?} larger than input {h}x{w}"));
                        }
                        (h - kernel[0] + 1, w - kernel[1] + 1)
                    }
                };
                Ok(vec![ho, wo, *out_channels])
            }
            LayerSpec::Dense { inputs, units } => {
                if input.len() != 1 {
                    return Err(format!("dense needs a flat input, receives {input:?}"));
                }
                if input[0] != *inputs {
                    return Err(format!("expects {inputs} inputs, receives {}", input[0]));
                }
                Ok(vec![*units])
            }
            LayerSpec::MaxPool { size } => {
                let [h, w, c] = spatial(input)?;
                if h < size[0] || w < size[1] {
                    return Err(format!("pool {size:?} larger than input {h}x{w}"));
                }
                Ok(vec![h / size[0], w / size[1], c])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::BatchNorm { channels, .. } => {
                if input.last() != Some(channels) {
                    return Err(format!("expects {channels} channels on the last axis, receives {input:?}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Sigmoid | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
        }
    }

    /// Shapes of trainable parameters, in storage order.
    pub(crate) fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![kernel[0], kernel[1], *in_channels, *out_channels]),
                ("bias", vec![*out_channels]),
            ],
            LayerSpec::Dense { inputs, units } => vec![("weight", vec![*inputs, *units]), ("bias", vec![*units])],
            LayerSpec::BatchNorm { channels, .. } => vec![("gamma", vec![*channels]), ("beta", vec![*channels])],
            _ => Vec::new(),
        }
    }

    /// Shapes of non-trainable state (batchnorm running statistics).
    pub(crate) fn state_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::BatchNorm { channels, .. } => vec![
                ("running_mean", vec![*channels]),
                ("running_var", vec![*channels]),
            ],
            _ => Vec::new(),
        }
    }

    /// `(fan_in, fan_out)` for Glorot initialization of the weight tensor.
    pub(crate) fn fans(&self) -> Option<(usize, usize)> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let field = kernel[0] * kernel[1];
                Some((field * in_channels, field * out_channels))
            }
            LayerSpec::Dense { inputs, units } => Some((*inputs, *units)),
            _ => None,
        }
    }
}

fn spatial(input: &[usize]) -> Result<[usize; 3], String> {
    match input {
        [h, w, c] => Ok([*h, *w, *c]),
        _ => Err(format!("needs an [H, W, C] input, receives {input:?}")),
    }
}

/// A layer with its shapes resolved and parameters materialized.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layer<T: Real> {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    pub params: Vec<Tensor<T>>,
    pub state: Vec<Tensor<T>>,
}

/// Per-layer values retained from the forward pass for backprop.
#[derive(Debug, Clone)]
pub(crate) enum Cache<T> {
    None,
    Argmax(Vec<u32>),
    Mask(Vec<T>),
    Norm {
        xhat: Vec<T>,
        inv_std: Vec<T>,
        mean: Vec<T>,
        var: Vec<T>,
    },
}

struct ConvGeom {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    pad_top: usize,
    pad_left: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.n * self.ho * self.wo
    }
    fn cols(&self) -> usize {
        self.kh * self.kw * self.c
    }
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let k = g.cols();
    let mut col = vec![T::zero(); g.rows() * k];
    for b in 0..g.n {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = ((b * g.ho + oy) * g.wo + ox) * k;
                for ky in 0..g.kh {
                    let iy = oy + ky;
                    if iy < g.pad_top || iy - g.pad_top >= g.h {
                        continue;
                    }
                    let iy = iy - g.pad_top;
                    for kx in 0..g.kw {
                        let ix = ox + kx;
                        if ix < g.pad_left || ix - g.pad_left >= g.w {
                            continue;
                        }
                        let ix = ix - g.pad_left;
                        let src = ((b * g.h + iy) * g.w + ix) * g.c;
                        let dst = row + (ky * g.kw + kx) * g.c;
                        col[dst..dst + g.c].copy_from_slice(&x[src..src + g.c]);
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let k = g.cols();
    for b in 0..g.n {
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let row = ((b * g.ho + oy) * g.wo + ox) * k;
                for ky in 0..g.kh {
                    let iy = oy + ky;
                    if iy < g.pad_top || iy - g.pad_top >= g.h {
                        continue;
                    }
                    let iy = iy - g.pad_top;
                    for kx in 0..g.kw {
                        let ix = ox + kx;
                        if ix < g.pad_left || ix - g.pad_left >= g.w {
                            continue;
                        }
                        let ix = ix - g.pad_left;
                        let dst = ((b * g.h + iy) * g.w + ix) * g.c;
                        let src = row + (ky * g.kw + kx) * g.c;
                        for ch in 0..g.c {
                            dx[dst + ch] += col[src + ch];
                        }
                    }
                }
            }
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn batch_shape(n: usize, sample: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(sample.len() + 1);
    s.push(n);
    s.extend_from_slice(sample);
    s
}

impl<T: Real> Layer<T> {
    fn conv_geom(&self, n: usize) -> ConvGeom {
        let LayerSpec::Conv2d { kernel, padding, .. } = &self.spec else {
            unreachable!("conv geometry on non-conv layer")
        };
        let (h, w, c) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
        let (pad_top, pad_left) = match padding {
            Padding::Same => ((kernel[0] - 1) / 2, (kernel[1] - 1) / 2),
            Padding::Valid => (0, 0),
        };
        ConvGeom {
            n,
            h,
            w,
            c,
            kh: kernel[0],
            kw: kernel[1],
            pad_top,
            pad_left,
            ho: self.out_shape[0],
            wo: self.out_shape[1],
        }
    }

    /// Runs the layer on a batch. Dropout is active only when `train` is set
    /// and an RNG is supplied; batchnorm uses batch statistics when `train`.
    pub fn forward(&self, x: &Tensor<T>, train: bool, rng: Option<&mut Rng>) -> (Tensor<T>, Cache<T>) {
        let n = x.batch_len();
        let out_shape = batch_shape(n, &self.out_shape);
        let xs = x.data();
        match &self.spec {
            LayerSpec::Conv2d { out_channels, .. } => {
                let g = self.conv_geom(n);
                let col = im2col(xs, &g);
                let mut y = vec![T::zero(); g.rows() * out_channels];
                matmul(
                    &col,
                    false,
                    self.params[0].data(),
                    false,
                    (g.rows(), g.cols(), *out_channels),
                    &mut y,
                    false,
                );
                add_bias(&mut y, self.params[1].data());
                (Tensor::from_vec(&out_shape, y).expect("conv shape"), Cache::None)
            }
            LayerSpec::Dense { inputs, units } => {
                let mut y = vec![T::zero(); n * units];
                matmul(xs, false, self.params[0].data(), false, (n, *inputs, *units), &mut y, false);
                add_bias(&mut y, self.params[1].data());
                (Tensor::from_vec(&out_shape, y).expect("dense shape"), Cache::None)
            }
            LayerSpec::MaxPool { size } => {
                let (h, w, c) = (self.in_shape[0], self.in_shape[1], self.in_shape[2]);
                let (ho, wo) = (self.out_shape[0], self.out_shape[1]);
                let mut y = Vec::with_capacity(n * ho * wo * c);
                let mut arg = Vec::with_capacity(n * ho * wo * c);
                for b in 0..n {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            for ch in 0..c {
                                let mut best = T::neg_infinity();
                                let mut best_i = 0usize;
                                for py in 0..size[0] {
                                    for px in 0..size[1] {
                                        let i = ((b * h + oy * size[0] + py) * w + ox * size[1] + px) * c + ch;
                                        if xs[i] > best || (py == 0 && px == 0) {
                                            best = xs[i];
                                            best_i = i;
                                        }
                                    }
                                }
                                y.push(best);
                                arg.push(best_i as u32);
                            }
                        }
                    }
                }
                (Tensor::from_vec(&out_shape, y).expect("pool shape"), Cache::Argmax(arg))
            }
            LayerSpec::Relu => {
                let y = xs.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
                (Tensor::from_vec(&out_shape, y).expect("relu shape"), Cache::None)
            }
            LayerSpec::Sigmoid => {
                let y = xs.iter().map(|&v| sigmoid(v)).collect();
                (Tensor::from_vec(&out_shape, y).expect("sigmoid shape"), Cache::None)
            }
            LayerSpec::Flatten => (x.clone().reshape(&out_shape).expect("flatten"), Cache::None),
            LayerSpec::Dropout { rate } => match (train, rng) {
                (true, Some(rng)) if *rate > 0.0 => {
                    let keep = T::from_f64_lossy(1.0 / (1.0 - *rate as f64));
                    let mask: Vec<T> = (0..xs.len())
                        .map(|_| if rng.gen::<f32>() >= *rate { keep } else { T::zero() })
                        .collect();
                    let y = xs.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    (Tensor::from_vec(&out_shape, y).expect("dropout shape"), Cache::Mask(mask))
                }
                _ => (x.clone(), Cache::None),
            },
            LayerSpec::BatchNorm { channels, epsilon, .. } => {
                let c = *channels;
                let gamma = self.params[0].data();
                let beta = self.params[1].data();
                let eps = T::from_f64_lossy(*epsilon as f64);
                if train {
                    let m = xs.len() / c;
                    let mf = T::from_usize(m).expect("count");
                    let mut mean = vec![T::zero(); c];
                    for row in xs.chunks_exact(c) {
                        for (acc, &v) in mean.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= mf);
                    let mut var = vec![T::zero(); c];
                    for row in xs.chunks_exact(c) {
                        for ((acc, &v), &mu) in var.iter_mut().zip(row).zip(&mean) {
                            *acc += (v - mu) * (v - mu);
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= mf);
                    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                    let mut xhat = Vec::with_capacity(xs.len());
                    let mut y = Vec::with_capacity(xs.len());
                    for row in xs.chunks_exact(c) {
                        for ch in 0..c {
                            let xh = (row[ch] - mean[ch]) * inv_std[ch];
                            xhat.push(xh);
                            y.push(gamma[ch] * xh + beta[ch]);
                        }
                    }
                    (
                        Tensor::from_vec(&out_shape, y).expect("bn shape"),
                        Cache::Norm {
                            xhat,
                            inv_std,
                            mean,
                            var,
                        },
                    )
                } else {
                    let rm = self.state[0].data();
                    let rv = self.state[1].data();
                    let scale: Vec<T> = (0..c).map(|ch| gamma[ch] / (rv[ch] + eps).sqrt()).collect();
                    let mut y = Vec::with_capacity(xs.len());
                    for row in xs.chunks_exact(c) {
                        for ch in 0..c {
                            y.push((row[ch] - rm[ch]) * scale[ch] + beta[ch]);
                        }
                    }
                    (Tensor::from_vec(&out_shape, y).expect("bn shape"), Cache::None)
                }
            }
        }
    }

    /// Gradient of the loss w.r.t. the layer input and parameters, given the
    /// gradient `dy` w.r.t. its output.
    pub fn backward(&self, x: &Tensor<T>, y: &Tensor<T>, cache: &Cache<T>, dy: &Tensor<T>) -> (Tensor<T>, Vec<Tensor<T>>) {
        let n = x.batch_len();
        let in_shape = batch_shape(n, &self.in_shape);
        let dys = dy.data();
        match &self.spec {
            LayerSpec::Conv2d { out_channels, .. } => {
                let g = self.conv_geom(n);
                let col = im2col(x.data(), &g);
                let (m, k, co) = (g.rows(), g.cols(), *out_channels);
                let mut dw = vec![T::zero(); k * co];
                matmul(&col, true, dys, false, (k, m, co), &mut dw, false);
                let db = column_sums(dys, co);
                let mut dcol = col;
                matmul(dys, false, self.params[0].data(), true, (m, co, k), &mut dcol, false);
                let mut dx = vec![T::zero(); x.len()];
                col2im(&dcol, &g, &mut dx);
                (
                    Tensor::from_vec(&in_shape, dx).expect("conv dx"),
                    vec![
                        Tensor::from_vec(self.params[0].shape(), dw).expect("conv dw"),
                        Tensor::from_vec(self.params[1].shape(), db).expect("conv db"),
                    ],
                )
            }
            LayerSpec::Dense { inputs, units } => {
                let mut dw = vec![T::zero(); inputs * units];
                matmul(x.data(), true, dys, false, (*inputs, n, *units), &mut dw, false);
                let db = column_sums(dys, *units);
                let mut dx = vec![T::zero(); n * inputs];
                matmul(dys, false, self.params[0].data(), true, (n, *units, *inputs), &mut dx, false);
                (
                    Tensor::from_vec(&in_shape, dx).expect("dense dx"),
                    vec![
                        Tensor::from_vec(self.params[0].shape(), dw).expect("dense dw"),
                        Tensor::from_vec(self.params[1].shape(), db).expect("dense db"),
                    ],
                )
            }
            LayerSpec::MaxPool { .. } => {
                let Cache::Argmax(arg) = cache else {
                    unreachable!("maxpool cache")
                };
                let mut dx = vec![T::zero(); x.len()];
                for (&i, &g) in arg.iter().zip(dys) {
                    dx[i as usize] += g;
                }
                (Tensor::from_vec(&in_shape, dx).expect("pool dx"), Vec::new())
            }
            LayerSpec::Relu => {
                let dx = y
                    .data()
                    .iter()
                    .zip(dys)
                    .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
                    .collect();
                (Tensor::from_vec(&in_shape, dx).expect("relu dx"), Vec::new())
            }
            LayerSpec::Sigmoid => {
                let dx = y.data().iter().zip(dys).map(|(&o, &g)| g * o * (T::one() - o)).collect();
                (Tensor::from_vec(&in_shape, dx).expect("sigmoid dx"), Vec::new())
            }
            LayerSpec::Flatten => (dy.clone().reshape(&in_shape).expect("flatten dx"), Vec::new()),
            LayerSpec::Dropout { .. } => match cache {
                Cache::Mask(mask) => {
                    let dx = dys.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                    (Tensor::from_vec(&in_shape, dx).expect("dropout dx"), Vec::new())
                }
                _ => (dy.clone(), Vec::new()),
            },
            LayerSpec::BatchNorm { channels, .. } => {
                let c = *channels;
                let gamma = self.params[0].data();
                let Cache::Norm { xhat, inv_std, .. } = cache else {
                    // Infer-mode normalization is a per-channel affine map.
                    let eps = match self.spec {
                        LayerSpec::BatchNorm { epsilon, .. } => T::from_f64_lossy(epsilon as f64),
                        _ => unreachable!(),
                    };
                    let rv = self.state[1].data();
                    let rm = self.state[0].data();
                    let mut dx = Vec::with_capacity(dys.len());
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for (row, xrow) in dys.chunks_exact(c).zip(x.data().chunks_exact(c)) {
                        for ch in 0..c {
                            let inv = T::one() / (rv[ch] + eps).sqrt();
                            dx.push(row[ch] * gamma[ch] * inv);
                            dgamma[ch] += row[ch] * (xrow[ch] - rm[ch]) * inv;
                            dbeta[ch] += row[ch];
                        }
                    }
                    return (
                        Tensor::from_vec(&in_shape, dx).expect("bn dx"),
                        vec![
                            Tensor::from_vec(&[c], dgamma).expect("bn dgamma"),
                            Tensor::from_vec(&[c], dbeta).expect("bn dbeta"),
                        ],
                    );
                };
                let m = T::from_usize(dys.len() / c).expect("count");
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let mut sum_dxhat = vec![T::zero(); c];
                let mut sum_dxhat_xhat = vec![T::zero(); c];
                for (row, xh) in dys.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        dgamma[ch] += row[ch] * xh[ch];
                        dbeta[ch] += row[ch];
                        let dxh = row[ch] * gamma[ch];
                        sum_dxhat[ch] += dxh;
                        sum_dxhat_xhat[ch] += dxh * xh[ch];
                    }
                }
                let mut dx = Vec::with_capacity(dys.len());
                for (row, xh) in dys.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        let dxh = row[ch] * gamma[ch];
                        dx.push(inv_std[ch] / m * (m * dxh - sum_dxhat[ch] - xh[ch] * sum_dxhat_xhat[ch]));
                    }
                }
                (
                    Tensor::from_vec(&in_shape, dx).expect("bn dx"),
                    vec![
                        Tensor::from_vec(&[c], dgamma).expect("bn dgamma"),
                        Tensor::from_vec(&[c], dbeta).expect("bn dbeta"),
                    ],
                )
            }
        }
    }
}

fn add_bias<T: Real>(y: &mut [T], bias: &[T]) {
    for row in y.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn column_sums<T: Real>(m: &[T], cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for row in m.chunks_exact(cols) {
        for (acc, &v) in out.iter_mut().zip(row) {
            *acc += v;
        }
    }
    out
}
