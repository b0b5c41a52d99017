//! Parameter-free layers and their backward passes.

use crate::error::ShapeError;
use crate::tensor::{check_dim, check_same_shape, Tensor4};

pub fn relu(x: &Tensor4) -> Tensor4 {
    x.map(|v| v.max(0.0))
}

/// Gradient of ReLU given its *output*; the unit is active where `out > 0`.
pub fn relu_backward(out: &Tensor4, grad: &Tensor4) -> Result<Tensor4, ShapeError> {
    check_same_shape(out, grad)?;
    let data = out
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
        .collect();
    Tensor4::from_vec(out.shape(), data)
}

/// Nearest-neighbour upsampling by 2 in both spatial axes.
pub fn upsample2(x: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    let (oh, ow) = (2 * h, 2 * w);
    let src = x.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        for y in 0..oh {
            let srow = &src[(plane * h + y / 2) * w..(plane * h + y / 2 + 1) * w];
            let drow = &mut dst[(plane * oh + y) * ow..(plane * oh + y + 1) * ow];
            for (x, d) in drow.iter_mut().enumerate() {
                *d = srow[x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(grad: &Tensor4) -> Result<Tensor4, ShapeError> {
    let [n, c, oh, ow] = grad.shape();
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(ShapeError::Mismatch {
            what: "upsampled height/width parity",
            expected: 0,
            found: (oh % 2).max(ow % 2),
        });
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut out = Tensor4::zeros([n, c, h, w]);
    let src = grad.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        for y in 0..oh {
            for x in 0..ow {
                dst[(plane * h + y / 2) * w + x / 2] += src[(plane * oh + y) * ow + x];
            }
        }
    }
    Ok(out)
}

/// Concatenates `a` and `b` along the channel axis.
pub fn concat_channels(a: &Tensor4, b: &Tensor4) -> Result<Tensor4, ShapeError> {
    check_dim("concat batch", a.batch(), b.batch())?;
    check_dim("concat height", a.height(), b.height())?;
    check_dim("concat width", a.width(), b.width())?;
    let [n, ca, h, w] = a.shape();
    let cb = b.channels();
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        data.extend_from_slice(a.item_slice(i));
        data.extend_from_slice(b.item_slice(i));
    }
    Tensor4::from_vec([n, ca + cb, h, w], data)
}

/// Splits a gradient of a concatenation back into its two parts; the first
/// part has `first_channels` channels.
pub fn split_channels(grad: &Tensor4, first_channels: usize) -> (Tensor4, Tensor4) {
    let [n, c, h, w] = grad.shape();
    assert!(first_channels <= c);
    let plane = h * w;
    let mut a = Vec::with_capacity(n * first_channels * plane);
    let mut b = Vec::with_capacity(n * (c - first_channels) * plane);
    for i in 0..n {
        let item = grad.item_slice(i);
        a.extend_from_slice(&item[..first_channels * plane]);
        b.extend_from_slice(&item[first_channels * plane..]);
    }
    (
        Tensor4::from_vec([n, first_channels, h, w], a).expect("sizes computed above"),
        Tensor4::from_vec([n, c - first_channels, h, w], b).expect("sizes computed above"),
    )
}

/// Softmax across channels at every pixel.
pub fn softmax_channels(x: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = x.shape();
    let plane = h * w;
    let mut out = Tensor4::zeros(x.shape());
    let src = x.data();
    let dst = out.data_mut();
    for i in 0..n {
        let base = i * c * plane;
        for p in 0..plane {
            let mut max = f64::NEG_INFINITY;
            for ch in 0..c {
                max = max.max(src[base + ch * plane + p]);
            }
            let mut sum = 0.0;
            for ch in 0..c {
                let e = (src[base + ch * plane + p] - max).exp();
                dst[base + ch * plane + p] = e;
                sum += e;
            }
            for ch in 0..c {
                dst[base + ch * plane + p] /= sum;
            }
        }
    }
    out
}

/// Backward of channel softmax given its output `prob`:
/// `dz = p ⊙ (g − Σ_c p·g)`.
pub fn softmax_channels_backward(prob: &Tensor4, grad: &Tensor4) -> Result<Tensor4, ShapeError> {
    check_same_shape(prob, grad)?;
    let [n, c, h, w] = prob.shape();
    let plane = h * w;
    let mut out = Tensor4::zeros(prob.shape());
    let (p, g) = (prob.data(), grad.data());
    let dst = out.data_mut();
    for i in 0..n {
        let base = i * c * plane;
        for px in 0..plane {
            let dot: f64 = (0..c)
                .map(|ch| p[base + ch * plane + px] * g[base + ch * plane + px])
                .sum();
            for ch in 0..c {
                let k = base + ch * plane + px;
                dst[k] = p[k] * (g[k] - dot);
            }
        }
    }
    Ok(out)
}
