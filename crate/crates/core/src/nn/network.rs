//! The toy three-branch network: an encoder of stacked blocks and three
//! decoders (nuclear pixel, horizontal/vertical distance, type) that each
//! upsample back to the input resolution.
//!
//! Each decoder stage is nearest ×2 upsampling, concatenation with the
//! deepest encoder activation at that resolution, a 3×3 conv and ReLU. A 1×1
//! conv head follows the last stage; the NP and TP heads are softmaxed over
//! channels and the HV head is linear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::block::{add, BlockCache, BlockKind, EncoderBlock};
use super::conv::{conv2d_backward, conv2d_forward, Conv2d};
use super::ops::{
    concat_channels, relu, relu_backward, softmax_channels, softmax_channels_backward, split_channels, upsample2,
    upsample2_backward,
};
use super::LayerGrad;
use crate::error::ShapeError;
use crate::tensor::{check_dim, Tensor4};

pub const INPUT_CHANNELS: usize = 3;
pub const NP_CHANNELS: usize = 2;
pub const HV_CHANNELS: usize = 2;
/// Background plus six nucleus classes.
pub const TP_CHANNELS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub input_size: usize,
    pub block_kind: BlockKind,
    /// Output widths of the three convolutions in each encoder block.
    pub encoder: Vec<[usize; 3]>,
    /// Output width of each decoder stage, deepest first. One stage per ×2
    /// downsampling in the encoder.
    pub decoder: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            block_kind: BlockKind::MultiFilter,
            encoder: vec![[8, 16, 16], [16, 32, 32]],
            decoder: vec![16, 16, 8, 8],
        }
    }
}

impl NetConfig {
    pub fn with_kind(mut self, kind: BlockKind) -> Self {
        self.block_kind = kind;
        self
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if self.encoder.is_empty() {
            return Err(ShapeError::Mismatch {
                what: "encoder blocks",
                expected: 1,
                found: 0,
            });
        }
        check_dim("decoder stages", 2 * self.encoder.len(), self.decoder.len())?;
        let factor = 4usize.pow(self.encoder.len() as u32);
        if self.input_size == 0 || self.input_size % factor != 0 {
            return Err(ShapeError::Mismatch {
                what: "input size remainder modulo encoder downsampling",
                expected: 0,
                found: self.input_size % factor.max(1),
            });
        }
        Ok(())
    }

    /// For each decoder stage, the `(block, conv)` encoder activation that is
    /// concatenated in: the deepest one at the stage's output resolution.
    fn skip_taps(&self) -> Vec<(usize, usize)> {
        let mut taps = Vec::new();
        let mut size = self.input_size;
        for b in 0..self.encoder.len() {
            taps.push((size, b, 0));
            taps.push((size / 2, b, 1));
            taps.push((size / 4, b, 2));
            size /= 4;
        }
        let bottleneck = taps.len() - 1;
        (0..self.decoder.len())
            .map(|j| {
                let target = size << (j + 1);
                let (_, b, i) = taps[..bottleneck]
                    .iter()
                    .rev()
                    .find(|t| t.0 == target)
                    .copied()
                    .expect("every decoder resolution has an encoder tap");
                (b, i)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Np,
    Hv,
    Tp,
}

impl Head {
    pub const ALL: [Head; 3] = [Head::Np, Head::Hv, Head::Tp];

    pub fn channels(self) -> usize {
        match self {
            Head::Np => NP_CHANNELS,
            Head::Hv => HV_CHANNELS,
            Head::Tp => TP_CHANNELS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Head::Np => "np",
            Head::Hv => "hv",
            Head::Tp => "tp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    stages: Vec<Conv2d>,
    head: Conv2d,
}

#[derive(Debug, Clone)]
struct BranchCache {
    /// Input to each stage's conv (upsampled ⊕ skip).
    stage_inputs: Vec<Tensor4>,
    stage_outputs: Vec<Tensor4>,
    up_channels: Vec<usize>,
}

impl Branch {
    fn forward(&self, bottleneck: &Tensor4, skips: &[&Tensor4]) -> Result<(Tensor4, BranchCache), ShapeError> {
        let mut cache = BranchCache {
            stage_inputs: Vec::with_capacity(self.stages.len()),
            stage_outputs: Vec::with_capacity(self.stages.len()),
            up_channels: Vec::with_capacity(self.stages.len()),
        };
        let mut x = bottleneck.clone();
        for (conv, skip) in self.stages.iter().zip(skips) {
            let up = upsample2(&x);
            cache.up_channels.push(up.channels());
            let cat = concat_channels(&up, skip)?;
            let a = relu(&conv2d_forward(&cat, conv)?);
            cache.stage_inputs.push(cat);
            cache.stage_outputs.push(a.clone());
            x = a;
        }
        let logits = conv2d_forward(&x, &self.head)?;
        Ok((logits, cache))
    }

    /// Returns the gradient at the bottleneck, per-stage skip gradients, and
    /// layer gradients (stages in order, then the head).
    fn backward(
        &self,
        cache: &BranchCache,
        grad_logits: &Tensor4,
    ) -> Result<(Tensor4, Vec<Tensor4>, Vec<LayerGrad>), ShapeError> {
        let n = self.stages.len();
        let last = cache.stage_outputs.last().expect("at least one stage");
        let hg = conv2d_backward(last, &self.head, grad_logits)?;
        let mut g = hg.input;
        let mut stage_grads = vec![LayerGrad::default(); n];
        let mut skip_grads = vec![Tensor4::zeros([0, 0, 0, 0]); n];
        for j in (0..n).rev() {
            g = relu_backward(&cache.stage_outputs[j], &g)?;
            let cg = conv2d_backward(&cache.stage_inputs[j], &self.stages[j], &g)?;
            stage_grads[j] = LayerGrad {
                weight: cg.weight.into_vec(),
                bias: cg.bias,
            };
            let (gup, gskip) = split_channels(&cg.input, cache.up_channels[j]);
            skip_grads[j] = gskip;
            g = upsample2_backward(&gup)?;
        }
        stage_grads.push(LayerGrad {
            weight: hg.weight.into_vec(),
            bias: hg.bias,
        });
        Ok((g, skip_grads, stage_grads))
    }
}

#[derive(Debug, Clone)]
pub struct NetOutput {
    pub np_prob: Tensor4,
    pub hv: Tensor4,
    pub tp_prob: Tensor4,
}

/// Gradients of a scalar objective with respect to the three head outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub np_prob: Tensor4,
    pub hv: Tensor4,
    pub tp_prob: Tensor4,
}

#[derive(Debug, Clone)]
pub struct NetCache {
    blocks: Vec<BlockCache>,
    branches: Vec<BranchCache>,
    output: NetOutput,
}

impl NetCache {
    pub fn output(&self) -> &NetOutput {
        &self.output
    }

    /// Every post-ReLU activation: encoder convs, then decoder stages of
    /// each branch.
    pub fn activations(&self) -> Vec<&Tensor4> {
        let encoder = self.blocks.iter().flat_map(|b| b.outputs.iter());
        let decoder = self.branches.iter().flat_map(|b| b.stage_outputs.iter());
        encoder.chain(decoder).collect()
    }
}

/// Per-layer gradients in [`ToyHovernet::layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub layers: Vec<LayerGrad>,
}

impl NetGrads {
    /// Weight and bias slices interleaved per layer, matching
    /// [`ToyHovernet::params_mut`].
    pub fn flat(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyHovernet {
    config: NetConfig,
    encoder: Vec<EncoderBlock>,
    branches: Vec<Branch>,
    skip_taps: Vec<(usize, usize)>,
}

impl ToyHovernet {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, ShapeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, |i, o, k, s, p| Conv2d::he_uniform(i, o, k, s, p, &mut rng))
    }

    /// All weights and biases zero.
    pub fn zeros(config: NetConfig) -> Result<Self, ShapeError> {
        Self::build(config, Conv2d::zeros)
    }

    fn build(
        config: NetConfig,
        mut make: impl FnMut(usize, usize, usize, usize, usize) -> Conv2d,
    ) -> Result<Self, ShapeError> {
        config.validate()?;
        let mut encoder = Vec::with_capacity(config.encoder.len());
        let mut in_c = INPUT_CHANNELS;
        for widths in &config.encoder {
            let k = config.block_kind.kernel_sizes();
            let s = config.block_kind.strides();
            let p = config.block_kind.paddings();
            let mut block = EncoderBlock::zeros(config.block_kind, in_c, *widths);
            let convs = block.convs_mut();
            convs[0] = make(in_c, widths[0], k[0], s[0], p[0]);
            convs[1] = make(widths[0], widths[1], k[1], s[1], p[1]);
            convs[2] = make(widths[1], widths[2], k[2], s[2], p[2]);
            encoder.push(block);
            in_c = widths[2];
        }
        let skip_taps = config.skip_taps();
        let bottleneck_c = in_c;
        let mut branches = Vec::with_capacity(3);
        for head in Head::ALL {
            let mut stages = Vec::with_capacity(config.decoder.len());
            let mut c = bottleneck_c;
            for (j, &width) in config.decoder.iter().enumerate() {
                let (b, i) = skip_taps[j];
                let skip_c = config.encoder[b][i];
                stages.push(make(c + skip_c, width, 3, 1, 1));
                c = width;
            }
            let head = make(c, head.channels(), 1, 1, 0);
            branches.push(Branch { stages, head });
        }
        Ok(Self {
            config,
            encoder,
            branches,
            skip_taps,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn encoder(&self) -> &[EncoderBlock] {
        &self.encoder
    }

    /// Every convolution with a stable name, encoder first, then the NP, HV
    /// and TP branches.
    pub fn layers(&self) -> Vec<(String, &Conv2d)> {
        let mut out = Vec::new();
        for (b, block) in self.encoder.iter().enumerate() {
            for (i, conv) in block.convs().iter().enumerate() {
                out.push((format!("enc{b}.conv{}", i + 1), conv));
            }
        }
        for (head, branch) in Head::ALL.iter().zip(&self.branches) {
            for (j, conv) in branch.stages.iter().enumerate() {
                out.push((format!("{}.dec{j}", head.name()), conv));
            }
            out.push((format!("{}.head", head.name()), &branch.head));
        }
        out
    }

    pub(crate) fn layers_mut(&mut self) -> Vec<&mut Conv2d> {
        let mut out: Vec<&mut Conv2d> = Vec::new();
        for block in &mut self.encoder {
            out.extend(block.convs_mut().iter_mut());
        }
        for branch in &mut self.branches {
            out.extend(branch.stages.iter_mut());
            out.push(&mut branch.head);
        }
        out
    }

    /// Mutable weight and bias slices, interleaved per layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for conv in self.layers_mut() {
            let Conv2d { weight, bias, .. } = conv;
            out.push(weight.data_mut());
            out.push(bias.as_mut_slice());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(_, c)| c.weight.len() + c.bias.len()).sum()
    }

    fn check_input(&self, input: &Tensor4) -> Result<(), ShapeError> {
        check_dim("input channels", INPUT_CHANNELS, input.channels())?;
        check_dim("input height", self.config.input_size, input.height())?;
        check_dim("input width", self.config.input_size, input.width())
    }

    pub fn forward(&self, input: &Tensor4) -> Result<NetOutput, ShapeError> {
        self.forward_cached(input).map(|c| c.output)
    }

    pub fn forward_cached(&self, input: &Tensor4) -> Result<NetCache, ShapeError> {
        self.check_input(input)?;
        let mut blocks = Vec::with_capacity(self.encoder.len());
        let mut x = input.clone();
        for block in &self.encoder {
            let (out, cache) = block.forward(&x)?;
            blocks.push(cache);
            x = out;
        }
        let skips: Vec<&Tensor4> = self.skip_taps.iter().map(|&(b, i)| &blocks[b].outputs[i]).collect();
        let mut branch_caches = Vec::with_capacity(3);
        let mut raw = Vec::with_capacity(3);
        for branch in &self.branches {
            let (logits, cache) = branch.forward(&x, &skips)?;
            branch_caches.push(cache);
            raw.push(logits);
        }
        let tp_logits = raw.pop().expect("three heads");
        let hv = raw.pop().expect("three heads");
        let np_logits = raw.pop().expect("three heads");
        let output = NetOutput {
            np_prob: softmax_channels(&np_logits),
            hv,
            tp_prob: softmax_channels(&tp_logits),
        };
        Ok(NetCache {
            blocks,
            branches: branch_caches,
            output,
        })
    }

    pub fn backward(&self, cache: &NetCache, grads: &OutputGrads) -> Result<NetGrads, ShapeError> {
        let out = &cache.output;
        let logit_grads = [
            softmax_channels_backward(&out.np_prob, &grads.np_prob)?,
            grads.hv.clone(),
            softmax_channels_backward(&out.tp_prob, &grads.tp_prob)?,
        ];

        let nb = self.encoder.len();
        let mut tap_grads: Vec<[Option<Tensor4>; 3]> = (0..nb).map(|_| [None, None, None]).collect();
        let accumulate = |slot: &mut Option<Tensor4>, g: Tensor4| -> Result<(), ShapeError> {
            *slot = Some(match slot.take() {
                Some(prev) => add(&prev, &g)?,
                None => g,
            });
            Ok(())
        };

        let mut branch_layer_grads = Vec::with_capacity(3);
        for ((branch, bc), lg) in self.branches.iter().zip(&cache.branches).zip(&logit_grads) {
            let (g_bottleneck, skip_grads, layers) = branch.backward(bc, lg)?;
            accumulate(&mut tap_grads[nb - 1][2], g_bottleneck)?;
            for (&(b, i), g) in self.skip_taps.iter().zip(skip_grads) {
                accumulate(&mut tap_grads[b][i], g)?;
            }
            branch_layer_grads.push(layers);
        }

        let mut encoder_grads: Vec<[LayerGrad; 3]> = Vec::with_capacity(nb);
        let mut carried: Option<Tensor4> = None;
        for b in (0..nb).rev() {
            let [g0, g1, g2] = std::mem::take(&mut tap_grads[b]);
            let g2 = match (g2, carried.take()) {
                (Some(a), Some(c)) => Some(add(&a, &c)?),
                (a, c) => a.or(c),
            };
            let (gin, lg) = self.encoder[b].backward(&cache.blocks[b], [g0.as_ref(), g1.as_ref(), g2.as_ref()])?;
            encoder_grads.push(lg);
            carried = Some(gin);
        }
        encoder_grads.reverse();

        let mut layers = Vec::new();
        for lg in encoder_grads {
            layers.extend(lg);
        }
        for lg in branch_layer_grads {
            layers.extend(lg);
        }
        Ok(NetGrads { layers })
    }
}

/// Inference: NP probabilities, HV maps and TP probabilities for a batch.
pub fn network_forward(input: &Tensor4, net: &ToyHovernet) -> Result<NetOutput, ShapeError> {
    net.forward(input)
}
