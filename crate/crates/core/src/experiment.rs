//! Train-and-evaluate runs on synthetic patches, one validation fold at a time.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{FoldSplit, ImageArchive};
use crate::metrics::{evaluate, multi_r, Aggregation, CountTable, UndefinedPolicy};
use crate::nn::{evaluate_loss, train_toy, BlockKind, NetConfig, ToyHovernet, TrainConfig, TrainOutcome, TrainingSet};
use crate::pipeline::predict;
use crate::postproc::{ClassedInstances, PostprocParams};
use crate::synth::SynthPatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub postproc: PostprocParams,
    pub init_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            train: TrainConfig::default(),
            postproc: PostprocParams::default(),
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub block_kind: BlockKind,
    /// Training-set total loss at initialization.
    pub initial_loss: f64,
    /// Training-set total loss after the last step.
    pub final_loss: f64,
    pub best_step: usize,
    pub pq: Option<f64>,
    pub mpq: Option<f64>,
    pub multi_r: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FoldRun {
    pub report: FoldReport,
    pub outcome: TrainOutcome,
    /// Post-processed predictions for the validation patches, in split order.
    pub predictions: Vec<ClassedInstances>,
}

pub fn training_set(patches: &[SynthPatch], indices: &[usize]) -> TrainingSet {
    let mut set = TrainingSet::default();
    for &i in indices {
        let p = &patches[i];
        set.push_patch(&p.rgb, p.labels.instances().labels(), &p.labels.class_map());
    }
    set
}

fn images_of(patches: &[SynthPatch], indices: &[usize], size: usize) -> Result<ImageArchive> {
    let data = indices.iter().flat_map(|&i| patches[i].rgb.iter().copied()).collect();
    ImageArchive::new(size, size, data)
}

/// Trains on `split.train`, selects weights on `split.val` and scores the
/// post-processed validation predictions.
pub fn run_fold(
    patches: &[SynthPatch],
    split: &FoldSplit,
    kind: BlockKind,
    config: &ExperimentConfig,
) -> Result<FoldRun> {
    let net_config = config.net.clone().with_kind(kind);
    let size = net_config.input_size;
    let net = ToyHovernet::new(net_config, config.init_seed)?;
    let train = training_set(patches, &split.train);
    let val = training_set(patches, &split.val);
    let initial_loss = evaluate_loss(&net, &train, &config.train.loss)?.total;
    let outcome = train_toy(net, &train, Some(&val), &config.train)?;
    let final_loss = evaluate_loss(&outcome.last, &train, &config.train.loss)?.total;

    let predictions = predict(
        &outcome.best,
        &images_of(patches, &split.val, size)?,
        &config.postproc,
        8,
    )?;
    let gt: Vec<ClassedInstances> = split.val.iter().map(|&i| patches[i].labels.clone()).collect();
    let eval = evaluate(&gt, &predictions)?;
    let counts = CountTable::new(
        gt.iter().map(|g| g.counts()).collect(),
        predictions.iter().map(|p| p.counts()).collect(),
    )?;
    let report = FoldReport {
        fold: split.fold,
        block_kind: kind,
        initial_loss,
        final_loss,
        best_step: outcome.best_step,
        pq: eval.binary_pq(Aggregation::Dataset).ok(),
        mpq: eval.mpq(Aggregation::Dataset, UndefinedPolicy::Skip).ok(),
        multi_r: multi_r(&counts).ok().map(|m| m.mean),
    };
    Ok(FoldRun {
        report,
        outcome,
        predictions,
    })
}
