//! 2-D cross-correlation with bias, forward and backward.
//!
//! Both passes lower each batch item to an im2col matrix and hand the heavy
//! lifting to a GEMM. Batch items are processed in parallel; per-item weight
//! gradients are reduced in batch order so results do not depend on thread
//! scheduling.

use rand::Rng;
use rayon::prelude::*;

use super::gemm::{gemm, Trans};
use crate::error::ShapeError;
use crate::tensor::{check_dim, Tensor4};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `(out_c, in_c, kh, kw)`.
    pub weight: Tensor4,
    pub bias: Vec<f64>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Tensor4,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_c: usize, out_c: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        assert!(stride > 0, "stride must be positive");
        Self {
            weight: Tensor4::zeros([out_c, in_c, kernel, kernel]),
            bias: vec![0.0; out_c],
            stride,
            padding,
        }
    }

    /// He-style uniform fan-in initialisation, zero bias.
    pub fn he_uniform<R: Rng>(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(in_c, out_c, kernel, stride, padding);
        let fan_in = (in_c * kernel * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        for w in layer.weight.data_mut() {
            *w = rng.gen_range(-bound..bound);
        }
        layer
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `(kh, kw)`.
    pub fn kernel_size(&self) -> (usize, usize) {
        let s = self.weight.shape();
        (s[2], s[3])
    }

    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize), ShapeError> {
        let (kh, kw) = self.kernel_size();
        let oh = out_dim("output height", h, kh, self.stride, self.padding)?;
        let ow = out_dim("output width", w, kw, self.stride, self.padding)?;
        Ok((oh, ow))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_size() == (1, 1) && self.stride == 1 && self.padding == 0
    }
}

fn out_dim(
    what: &'static str,
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<usize, ShapeError> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(ShapeError::EmptyOutput {
            what,
            input,
            kernel,
            stride,
            padding,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new(input: &Tensor4, layer: &Conv2d) -> Result<Self, ShapeError> {
        check_dim("input channels", layer.in_channels(), input.channels())?;
        check_dim("bias length", layer.out_channels(), layer.bias.len())?;
        let (oh, ow) = layer.output_size(input.height(), input.width())?;
        let (kh, kw) = layer.kernel_size();
        Ok(Self {
            c: input.channels(),
            h: input.height(),
            w: input.width(),
            kh,
            kw,
            oh,
            ow,
            stride: layer.stride,
            padding: layer.padding,
        })
    }

    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    /// Output positions `lo..hi` whose tap `t` falls inside `0..limit`, and
    /// the source coordinate of `lo`.
    #[inline]
    fn valid(&self, out: usize, t: usize, limit: usize) -> (usize, usize, usize) {
        let (s, pad) = (self.stride, self.padding);
        let lo = if pad > t { (pad - t).div_ceil(s) } else { 0 };
        let hi = if limit + pad > t {
            ((limit + pad - t - 1) / s + 1).min(out)
        } else {
            0
        };
        let lo = lo.min(hi);
        (lo, hi, lo * s + t - pad.min(lo * s + t))
    }

    fn im2col(&self, item: &[f64], cols: &mut [f64]) {
        let p = self.p();
        let s = self.stride;
        for c in 0..self.c {
            let plane = &item[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                let (ylo, yhi, iy0) = self.valid(self.oh, ky, self.h);
                for kx in 0..self.kw {
                    let (xlo, xhi, ix0) = self.valid(self.ow, kx, self.w);
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    dst[..ylo * self.ow].fill(0.0);
                    dst[yhi * self.ow..].fill(0.0);
                    for (j, oy) in (ylo..yhi).enumerate() {
                        let line = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        let src = &plane[(iy0 + j * s) * self.w..(iy0 + j * s + 1) * self.w];
                        line[..xlo].fill(0.0);
                        line[xhi..].fill(0.0);
                        if xlo == xhi {
                            continue;
                        }
                        if s == 1 {
                            line[xlo..xhi].copy_from_slice(&src[ix0..ix0 + (xhi - xlo)]);
                        } else {
                            for (v, &x) in line[xlo..xhi].iter_mut().zip(src[ix0..].iter().step_by(s)) {
                                *v = x;
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], item: &mut [f64]) {
        let p = self.p();
        let s = self.stride;
        let (h, w) = (self.h, self.w);
        for c in 0..self.c {
            let plane = &mut item[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                let (ylo, yhi, iy0) = self.valid(self.oh, ky, h);
                for kx in 0..self.kw {
                    let (xlo, xhi, ix0) = self.valid(self.ow, kx, w);
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for (j, oy) in (ylo..yhi).enumerate() {
                        let line = &src[oy * self.ow + xlo..oy * self.ow + xhi];
                        if line.is_empty() {
                            continue;
                        }
                        let dst = &mut plane[(iy0 + j * s) * w..(iy0 + j * s + 1) * w];
                        if s == 1 {
                            for (d, &v) in dst[ix0..ix0 + line.len()].iter_mut().zip(line) {
                                *d += v;
                            }
                        } else {
                            for (d, &v) in dst[ix0..].iter_mut().step_by(s).zip(line) {
                                *d += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(input: &Tensor4, layer: &Conv2d) -> Result<Tensor4, ShapeError> {
    let g = Geometry::new(input, layer)?;
    let oc = layer.out_channels();
    let (k, p) = (g.k(), g.p());
    let mut out = Tensor4::zeros([input.batch(), oc, g.oh, g.ow]);
    if out.is_empty() {
        return Ok(out);
    }
    let out_len = out.item_len();
    let pointwise = layer.is_pointwise();
    out.data_mut().par_chunks_mut(out_len).enumerate().for_each(|(n, dst)| {
        let item = input.item_slice(n);
        for (o, b) in layer.bias.iter().enumerate() {
            dst[o * p..(o + 1) * p].fill(*b);
        }
        if pointwise {
            gemm(oc, k, p, layer.weight.data(), Trans::No, item, Trans::No, 1.0, dst);
        } else {
            let mut cols = vec![0.0; k * p];
            g.im2col(item, &mut cols);
            gemm(oc, k, p, layer.weight.data(), Trans::No, &cols, Trans::No, 1.0, dst);
        }
    });
    Ok(out)
}

pub fn conv2d_backward(input: &Tensor4, layer: &Conv2d, grad_out: &Tensor4) -> Result<ConvGrads, ShapeError> {
    let g = Geometry::new(input, layer)?;
    let oc = layer.out_channels();
    check_dim("grad batch", input.batch(), grad_out.batch())?;
    check_dim("grad channels", oc, grad_out.channels())?;
    check_dim("grad height", g.oh, grad_out.height())?;
    check_dim("grad width", g.ow, grad_out.width())?;
    let (k, p) = (g.k(), g.p());
    let pointwise = layer.is_pointwise();

    let per_item: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..input.batch())
        .into_par_iter()
        .map(|n| {
            let item = input.item_slice(n);
            let go = grad_out.item_slice(n);
            let mut gw = vec![0.0; oc * k];
            let mut gb = vec![0.0; oc];
            for (o, b) in gb.iter_mut().enumerate() {
                *b = go[o * p..(o + 1) * p].iter().sum();
            }
            let mut gi = vec![0.0; input.item_len()];
            if pointwise {
                gemm(oc, p, k, go, Trans::No, item, Trans::Yes, 0.0, &mut gw);
                gemm(k, oc, p, layer.weight.data(), Trans::Yes, go, Trans::No, 0.0, &mut gi);
            } else {
                let mut cols = vec![0.0; k * p];
                g.im2col(item, &mut cols);
                gemm(oc, p, k, go, Trans::No, &cols, Trans::Yes, 0.0, &mut gw);
                gemm(k, oc, p, layer.weight.data(), Trans::Yes, go, Trans::No, 0.0, &mut cols);
                g.col2im(&cols, &mut gi);
            }
            (gi, gw, gb)
        })
        .collect();

    let mut grad_input = Vec::with_capacity(input.len());
    let mut grad_weight = Tensor4::zeros(layer.weight.shape());
    let mut grad_bias = vec![0.0; oc];
    for (gi, gw, gb) in per_item {
        grad_input.extend_from_slice(&gi);
        for (a, b) in grad_weight.data_mut().iter_mut().zip(&gw) {
            *a += b;
        }
        for (a, b) in grad_bias.iter_mut().zip(&gb) {
            *a += b;
        }
    }
    Ok(ConvGrads {
        input: Tensor4::from_vec(input.shape(), grad_input)?,
        weight: grad_weight,
        bias: grad_bias,
    })
}
