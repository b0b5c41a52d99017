//! Encoder blocks: the multi-filter block and a plain 3×3 baseline.
//!
//! A multi-filter block is a 1×1 conv (stride 1), then a 3×3 conv (stride 2),
//! then a 5×5 conv (stride 2), each followed by ReLU. Paddings (0, 1, 2) make
//! the block downsample by exactly 4. The plain block keeps the same strides
//! and channel widths but uses 3×3 kernels throughout, so the only difference
//! between the two is the kernel sizes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, Conv2d};
use super::ops::{relu, relu_backward};
use super::LayerGrad;
use crate::error::ShapeError;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    MultiFilter,
    Plain,
}

impl BlockKind {
    pub fn kernel_sizes(self) -> [usize; 3] {
        match self {
            BlockKind::MultiFilter => [1, 3, 5],
            BlockKind::Plain => [3, 3, 3],
        }
    }

    pub fn strides(self) -> [usize; 3] {
        [1, 2, 2]
    }

    /// "Same"-style paddings: `k / 2` for each kernel.
    pub fn paddings(self) -> [usize; 3] {
        self.kernel_sizes().map(|k| k / 2)
    }

    pub fn code(self) -> u8 {
        match self {
            BlockKind::MultiFilter => 0,
            BlockKind::Plain => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BlockKind::MultiFilter),
            1 => Some(BlockKind::Plain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    kind: BlockKind,
    convs: [Conv2d; 3],
}

/// Activations kept from a block's forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    pub input: Tensor4,
    /// ReLU outputs of the three convolutions.
    pub outputs: [Tensor4; 3],
}

impl EncoderBlock {
    fn build(
        kind: BlockKind,
        in_c: usize,
        widths: [usize; 3],
        mut make: impl FnMut(usize, usize, usize, usize, usize) -> Conv2d,
    ) -> Self {
        let k = kind.kernel_sizes();
        let s = kind.strides();
        let p = kind.paddings();
        let convs = [
            make(in_c, widths[0], k[0], s[0], p[0]),
            make(widths[0], widths[1], k[1], s[1], p[1]),
            make(widths[1], widths[2], k[2], s[2], p[2]),
        ];
        Self { kind, convs }
    }

    pub fn new<R: Rng>(kind: BlockKind, in_c: usize, widths: [usize; 3], rng: &mut R) -> Self {
        Self::build(kind, in_c, widths, |i, o, k, s, p| {
            Conv2d::he_uniform(i, o, k, s, p, rng)
        })
    }

    pub fn zeros(kind: BlockKind, in_c: usize, widths: [usize; 3]) -> Self {
        Self::build(kind, in_c, widths, Conv2d::zeros)
    }

    pub fn multi_filter<R: Rng>(in_c: usize, widths: [usize; 3], rng: &mut R) -> Self {
        Self::new(BlockKind::MultiFilter, in_c, widths, rng)
    }

    pub fn kind(&self) -> BlockKind {
        self.kind
    }

    pub fn convs(&self) -> &[Conv2d; 3] {
        &self.convs
    }

    pub fn convs_mut(&mut self) -> &mut [Conv2d; 3] {
        &mut self.convs
    }

    pub fn kernel_sizes(&self) -> [usize; 3] {
        self.convs.each_ref().map(|c| c.kernel_size().0)
    }

    pub fn strides(&self) -> [usize; 3] {
        self.convs.each_ref().map(|c| c.stride)
    }

    pub fn in_channels(&self) -> usize {
        self.convs[0].in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.convs[2].out_channels()
    }

    pub fn forward(&self, input: &Tensor4) -> Result<(Tensor4, BlockCache), ShapeError> {
        let a1 = relu(&conv2d_forward(input, &self.convs[0])?);
        let a2 = relu(&conv2d_forward(&a1, &self.convs[1])?);
        let a3 = relu(&conv2d_forward(&a2, &self.convs[2])?);
        let out = a3.clone();
        Ok((
            out,
            BlockCache {
                input: input.clone(),
                outputs: [a1, a2, a3],
            },
        ))
    }

    /// Backpropagates through the block. `grads[i]` is the gradient arriving
    /// at the output of conv `i` (after its ReLU); intermediate outputs may
    /// receive gradient from skip connections, so all three are accepted.
    pub fn backward(
        &self,
        cache: &BlockCache,
        grads: [Option<&Tensor4>; 3],
    ) -> Result<(Tensor4, [LayerGrad; 3]), ShapeError> {
        let mut carried: Option<Tensor4> = None;
        let mut layer_grads: Vec<LayerGrad> = Vec::with_capacity(3);
        for i in (0..3).rev() {
            let mut g = match (carried.take(), grads[i]) {
                (Some(c), Some(extra)) => add(&c, extra)?,
                (Some(c), None) => c,
                (None, Some(extra)) => extra.clone(),
                (None, None) => Tensor4::zeros(cache.outputs[i].shape()),
            };
            g = relu_backward(&cache.outputs[i], &g)?;
            let layer_in = if i == 0 { &cache.input } else { &cache.outputs[i - 1] };
            let cg = conv2d_backward(layer_in, &self.convs[i], &g)?;
            layer_grads.push(LayerGrad {
                weight: cg.weight.into_vec(),
                bias: cg.bias,
            });
            carried = Some(cg.input);
        }
        layer_grads.reverse();
        let [g0, g1, g2]: [LayerGrad; 3] = layer_grads.try_into().expect("three layers");
        Ok((carried.expect("three layers"), [g0, g1, g2]))
    }
}

pub(crate) fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4, ShapeError> {
    crate::tensor::check_same_shape(a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor4::from_vec(a.shape(), data)
}

/// Runs `block` on `input`: conv1 → ReLU → conv2 → ReLU → conv3 → ReLU.
pub fn mf_block_forward(input: &Tensor4, block: &EncoderBlock) -> Result<Tensor4, ShapeError> {
    block.forward(input).map(|(out, _)| out)
}
