//! Dense double-precision CNN pieces with explicit backward passes.

pub mod adam;
pub mod block;
pub mod checkpoint;
pub mod conv;
pub(crate) mod gemm;
pub mod loss;
pub mod network;
pub mod ops;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use block::{mf_block_forward, BlockKind, EncoderBlock};
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads};
pub use loss::{composite_loss, composite_loss_grad, LossParts, LossWeights, Targets};
pub use network::{
    network_forward, NetConfig, NetGrads, NetOutput, OutputGrads, ToyHovernet, HV_CHANNELS, INPUT_CHANNELS,
    NP_CHANNELS, TP_CHANNELS,
};
pub use train::{evaluate_loss, predict_set, train_toy, TraceRow, TrainConfig, TrainOutcome, TrainingSet};

/// Gradient of one convolution's parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}
