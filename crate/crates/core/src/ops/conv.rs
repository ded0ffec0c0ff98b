//! 1D convolution in standard, depthwise and pointwise form.
//!
//! All three modes share one grouped kernel. Weights are laid out as
//! `[out_channel][in_channel_in_group][tap]`: a standard convolution has a
//! single group spanning all input channels, a depthwise convolution has one
//! group per channel, and a pointwise convolution is a standard convolution
//! with a single tap. Padding is zeros on both sides.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    Standard,
    Depthwise,
    Pointwise,
}

impl std::fmt::Display for ConvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConvMode::Standard => "standard",
            ConvMode::Depthwise => "depthwise",
            ConvMode::Pointwise => "pointwise",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub mode: ConvMode,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Vec<T>,
    pub bias: Option<Vec<T>>,
}

/// Output length of a convolution: `floor((L + 2p - k) / s) + 1`.
pub fn conv_output_len(
    length: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let padded = length + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn weight_count(
    mode: ConvMode,
    kernel: usize,
    in_channels: usize,
    out_channels: usize,
) -> usize {
    match mode {
        ConvMode::Standard => kernel * in_channels * out_channels,
        ConvMode::Depthwise => kernel * in_channels,
        ConvMode::Pointwise => in_channels * out_channels,
    }
}

impl<T: Scalar> ConvParams<T> {
    /// Zero-initialised parameters. Depthwise layers require
    /// `out_channels == in_channels`; pointwise layers require `kernel == 1`
    /// and no padding.
    pub fn new(
        mode: ConvMode,
        kernel_size: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
        with_bias: bool,
    ) -> Result<Self> {
        if kernel_size == 0 || stride == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid(
                "conv1d",
                "kernel size, stride and channel counts must be positive",
            ));
        }
        match mode {
            ConvMode::Depthwise if in_channels != out_channels => {
                return Err(Error::Shape {
                    op: "conv1d(depthwise)",
                    dim: "out_channels",
                    expected: in_channels,
                    actual: out_channels,
                })
            }
            ConvMode::Pointwise if kernel_size != 1 || padding != 0 => {
                return Err(Error::invalid(
                    "conv1d(pointwise)",
                    format!("kernel must be 1 with no padding, got k={kernel_size} p={padding}"),
                ))
            }
            _ => {}
        }
        Ok(ConvParams {
            mode,
            kernel_size,
            in_channels,
            out_channels,
            stride,
            padding,
            weight: vec![T::zero(); weight_count(mode, kernel_size, in_channels, out_channels)],
            bias: with_bias.then(|| vec![T::zero(); out_channels]),
        })
    }

    /// Input channels feeding each output channel.
    pub fn fan_in(&self) -> usize {
        self.group_width() * self.kernel_size
    }

    fn group_width(&self) -> usize {
        match self.mode {
            ConvMode::Depthwise => 1,
            ConvMode::Standard | ConvMode::Pointwise => self.in_channels,
        }
    }

    fn first_input(&self, out_channel: usize) -> usize {
        match self.mode {
            ConvMode::Depthwise => out_channel,
            ConvMode::Standard | ConvMode::Pointwise => 0,
        }
    }

    pub fn output_len(&self, length: usize) -> Result<usize> {
        conv_output_len(length, self.kernel_size, self.stride, self.padding).ok_or_else(|| {
            Error::invalid(
                "conv1d",
                format!(
                    "input length {length} too short for kernel {} with padding {}",
                    self.kernel_size, self.padding
                ),
            )
        })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    /// He-uniform initialisation: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    /// Biases start at zero.
    pub fn init_he_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bound = (6.0 / self.fan_in() as f64).sqrt();
        for w in &mut self.weight {
            *w = T::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        if let Some(b) = &mut self.bias {
            b.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    fn check_input(&self, input: Shape) -> Result<usize> {
        if input.channels != self.in_channels {
            return Err(Error::Shape {
                op: "conv1d",
                dim: "channels",
                expected: self.in_channels,
                actual: input.channels,
            });
        }
        self.output_len(input.length)
    }
}

/// Output positions `t` for which tap `j` reads a real (non-padding) sample.
#[inline]
fn tap_range(
    tap: usize,
    pad: usize,
    stride: usize,
    in_len: usize,
    out_len: usize,
) -> (usize, usize) {
    let start = if pad > tap {
        (pad - tap).div_ceil(stride)
    } else {
        0
    };
    let end = if in_len + pad > tap {
        ((in_len - 1 + pad - tap) / stride + 1).min(out_len)
    } else {
        0
    };
    (start, end.max(start))
}

/// Dot product with eight independent partial sums so the loop vectorises.
#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] = lanes[l] + x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail = tail + x * y;
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail
}

pub fn conv1d_forward<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let in_shape = input.shape();
    let out_len = params.check_input(in_shape)?;
    let (k, s, p) = (params.kernel_size, params.stride, params.padding);
    let width = params.group_width();
    let mut out = Tensor::zeros(Shape::new(in_shape.batch, params.out_channels, out_len));

    for b in 0..in_shape.batch {
        for co in 0..params.out_channels {
            let first = params.first_input(co);
            let row = out.row_mut(b, co);
            if let Some(bias) = &params.bias {
                row.iter_mut().for_each(|v| *v = bias[co]);
            }
            for gi in 0..width {
                let x = input.row(b, first + gi);
                let w = &params.weight[(co * width + gi) * k..(co * width + gi + 1) * k];
                for (j, &wj) in w.iter().enumerate() {
                    let (t0, t1) = tap_range(j, p, s, in_shape.length, out_len);
                    if t0 >= t1 {
                        continue;
                    }
                    let src0 = t0 * s + j - p;
                    if s == 1 {
                        let xs = &x[src0..src0 + (t1 - t0)];
                        for (o, &xv) in row[t0..t1].iter_mut().zip(xs) {
                            *o = *o + wj * xv;
                        }
                    } else {
                        for (n, o) in row[t0..t1].iter_mut().enumerate() {
                            *o = *o + wj * x[src0 + n * s];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reverse-mode pass. `saved_input` is the tensor given to the forward call.
pub fn conv1d_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    saved_input: Option<&Tensor<T>>,
    params: &ConvParams<T>,
) -> Result<ConvGrads<T>> {
    let input = saved_input.ok_or(Error::MissingCache {
        op: "conv1d_backward",
    })?;
    let in_shape = input.shape();
    let out_len = params.check_input(in_shape)?;
    let expected = Shape::new(in_shape.batch, params.out_channels, out_len);
    output_grad.check_same_shape("conv1d_backward", &Tensor::zeros(expected))?;

    let (k, s, p) = (params.kernel_size, params.stride, params.padding);
    let width = params.group_width();
    let mut dx = Tensor::zeros(in_shape);
    let mut dw = vec![T::zero(); params.weight.len()];
    let mut db = params.bias.as_ref().map(|b| vec![T::zero(); b.len()]);

    for b in 0..in_shape.batch {
        for co in 0..params.out_channels {
            let g = output_grad.row(b, co);
            if let Some(db) = &mut db {
                db[co] = db[co] + g.iter().copied().sum::<T>();
            }
            let first = params.first_input(co);
            for gi in 0..width {
                let ci = first + gi;
                let widx = (co * width + gi) * k;
                for j in 0..k {
                    let (t0, t1) = tap_range(j, p, s, in_shape.length, out_len);
                    if t0 >= t1 {
                        continue;
                    }
                    let src0 = t0 * s + j - p;
                    let wj = params.weight[widx + j];
                    let x = input.row(b, ci);
                    let mut acc = T::zero();
                    if s == 1 {
                        let n = t1 - t0;
                        acc = dot(&g[t0..t1], &x[src0..src0 + n]);
                        let dxr = dx.row_mut(b, ci);
                        for (d, &gv) in dxr[src0..src0 + n].iter_mut().zip(&g[t0..t1]) {
                            *d = *d + wj * gv;
                        }
                    } else {
                        for (n, &gv) in g[t0..t1].iter().enumerate() {
                            acc = acc + gv * x[src0 + n * s];
                        }
                        let dxr = dx.row_mut(b, ci);
                        for (n, &gv) in g[t0..t1].iter().enumerate() {
                            let d = &mut dxr[src0 + n * s];
                            *d = *d + wj * gv;
                        }
                    }
                    dw[widx + j] = dw[widx + j] + acc;
                }
            }
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
