//! Multi-filter HoVer-style nuclei segmentation at toy scale: tensors and
//! autograd-free layers with explicit backward passes, instance
//! post-processing, panoptic-quality evaluation and the patch archive formats.

pub mod chart;
pub mod classes;
pub mod error;
pub mod experiment;
pub mod io;
pub mod label;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod postproc;
pub mod synth;
pub mod targets;
pub mod tensor;

pub use classes::{ClassOrder, CountVector, CLASS_NAMES, NUM_CLASSES};
pub use error::{Error, Result, ShapeError};
pub use label::LabelMap;
pub use tensor::Tensor4;
