//! Seeded mini-batch training of the toy network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{composite_loss, composite_loss_grad, LossParts, LossWeights, Targets};
use super::network::{NetOutput, ToyHovernet};
use crate::error::{Error, Result};
use crate::label::LabelMap;
use crate::targets::{hv_maps, image_to_tensor};
use crate::tensor::Tensor4;

/// Network inputs and targets for a set of patches.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub inputs: Vec<Tensor4>,
    pub np: Vec<LabelMap>,
    pub hv: Vec<Tensor4>,
    pub tp: Vec<LabelMap>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Adds one patch from its RGB image, instance map and class map.
    pub fn push_patch(&mut self, rgb: &[u8], instances: &LabelMap, classes: &LabelMap) {
        let (h, w) = instances.dims();
        self.inputs.push(image_to_tensor(rgb, h, w));
        self.np.push(instances.map(|v| (v > 0) as u32));
        self.hv.push(hv_maps(instances));
        self.tp.push(classes.clone());
    }

    pub fn subset(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            np: indices.iter().map(|&i| self.np[i].clone()).collect(),
            hv: indices.iter().map(|&i| self.hv[i].clone()).collect(),
            tp: indices.iter().map(|&i| self.tp[i].clone()).collect(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor4, Targets)> {
        let inputs: Vec<Tensor4> = indices.iter().map(|&i| self.inputs[i].clone()).collect();
        let hv: Vec<Tensor4> = indices.iter().map(|&i| self.hv[i].clone()).collect();
        Ok((
            Tensor4::stack(&inputs)?,
            Targets {
                np: indices.iter().map(|&i| self.np[i].clone()).collect(),
                hv: Tensor4::stack(&hv)?,
                tp: indices.iter().map(|&i| self.tp[i].clone()).collect(),
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    /// Validation cadence in steps for model selection; 0 validates only at
    /// the start and the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 6,
            seed: 0,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            eval_every: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    #[serde(flatten)]
    pub parts: LossParts,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Loss parts of every step's mini-batch, measured before the update.
    pub trace: Vec<TraceRow>,
    /// Weights after the last step.
    pub last: ToyHovernet,
    /// Weights with the lowest validation loss (equal to `last` without a
    /// validation set).
    pub best: ToyHovernet,
    /// Number of updates applied to `best`.
    pub best_step: usize,
    /// `(updates applied, validation total loss)` at every checkpoint.
    pub validation: Vec<(usize, f64)>,
}

/// Forward pass over a whole set in chunks, then concatenated outputs.
pub fn predict_set(net: &ToyHovernet, set: &TrainingSet, chunk: usize) -> Result<NetOutput> {
    let mut np = Vec::new();
    let mut hv = Vec::new();
    let mut tp = Vec::new();
    let idx: Vec<usize> = (0..set.len()).collect();
    for part in idx.chunks(chunk.max(1)) {
        let inputs: Vec<Tensor4> = part.iter().map(|&i| set.inputs[i].clone()).collect();
        let out = net.forward(&Tensor4::stack(&inputs)?)?;
        np.push(out.np_prob);
        hv.push(out.hv);
        tp.push(out.tp_prob);
    }
    Ok(NetOutput {
        np_prob: Tensor4::stack(&np)?,
        hv: Tensor4::stack(&hv)?,
        tp_prob: Tensor4::stack(&tp)?,
    })
}

/// Composite loss of `net` over an entire set, with Dice sums taken over the
/// whole set.
pub fn evaluate_loss(net: &ToyHovernet, set: &TrainingSet, weights: &LossWeights) -> Result<LossParts> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let out = predict_set(net, set, 8)?;
    let idx: Vec<usize> = (0..set.len()).collect();
    let (_, targets) = set.batch(&idx)?;
    composite_loss(&out, &targets, weights)
}

/// Endless stream of indices: a fresh seeded shuffle for every epoch.
struct Sampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

pub fn train_toy(
    mut net: ToyHovernet,
    train: &TrainingSet,
    val: Option<&TrainingSet>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let lens: Vec<usize> = net.params_mut().iter().map(|p| p.len()).collect();
    let mut adam = AdamState::new(config.adam, lens);
    let mut sampler = Sampler::new(train.len(), config.seed);
    let mut trace = Vec::with_capacity(config.steps);
    let mut validation = Vec::new();
    let mut best = net.clone();
    let mut best_step = 0;
    let mut best_loss = f64::INFINITY;

    let mut validate = |net: &ToyHovernet, step: usize, validation: &mut Vec<(usize, f64)>| -> Result<()> {
        if let Some(v) = val {
            let loss = evaluate_loss(net, v, &config.loss)?.total;
            validation.push((step, loss));
            if loss < best_loss {
                best_loss = loss;
                best = net.clone();
                best_step = step;
            }
        }
        Ok(())
    };
    validate(&net, 0, &mut validation)?;

    for step in 0..config.steps {
        let idx = sampler.next_batch(config.batch_size);
        let (input, targets) = train.batch(&idx)?;
        let cache = net.forward_cached(&input)?;
        let (parts, out_grads) = composite_loss_grad(cache.output(), &targets, &config.loss)?;
        if !parts.is_finite() {
            return Err(Error::Divergence {
                step,
                detail: format!("non-finite loss {parts:?}"),
            });
        }
        trace.push(TraceRow { step, parts });
        let grads = net.backward(&cache, &out_grads)?;
        drop(cache);
        if let Some(bad) = grads
            .layers
            .iter()
            .position(|l| l.weight.iter().chain(&l.bias).any(|g| !g.is_finite()))
        {
            return Err(Error::Divergence {
                step,
                detail: format!("non-finite gradient in layer {}", net.layers()[bad].0),
            });
        }
        let flat = grads.flat();
        adam.update(&mut net.params_mut(), &flat)?;
        let done = step + 1;
        if config.eval_every > 0 && done % config.eval_every == 0 && done != config.steps {
            validate(&net, done, &mut validation)?;
        }
    }
    if config.steps > 0 {
        validate(&net, config.steps, &mut validation)?;
    }
    if val.is_none() {
        best = net.clone();
        best_step = config.steps;
    }
    Ok(TrainOutcome {
        trace,
        last: net,
        best,
        best_step,
        validation,
    })
}
