//! Run configuration: defaults, then an optional JSON file, then flags.

use std::path::Path;

use clap::{Args, ValueEnum};
use mfhover::metrics::{Aggregation, UndefinedPolicy};
use mfhover::nn::{BlockKind, NetConfig, TrainConfig};
use mfhover::postproc::PostprocParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub init_seed: u64,
    pub fold_seed: u64,
    pub fold: Option<usize>,
    pub chunk: usize,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub postproc: PostprocParams,
    pub aggregation: Aggregation,
    pub undefined_policy: UndefinedPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            init_seed: 0,
            fold_seed: 0,
            fold: None,
            chunk: 8,
            net: NetConfig::default(),
            train: TrainConfig::default(),
            postproc: PostprocParams::default(),
            aggregation: Aggregation::default(),
            undefined_policy: UndefinedPolicy::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        if !path.is_file() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            source: serde_json::Error::io(e),
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BlockArg {
    MultiFilter,
    Plain,
}

impl From<BlockArg> for BlockKind {
    fn from(b: BlockArg) -> Self {
        match b {
            BlockArg::MultiFilter => BlockKind::MultiFilter,
            BlockArg::Plain => BlockKind::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Dataset,
    PerImage,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Dataset => Aggregation::Dataset,
            AggregationArg::PerImage => Aggregation::PerImage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Skip,
    CountAsZero,
}

impl From<PolicyArg> for UndefinedPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Skip => UndefinedPolicy::Skip,
            PolicyArg::CountAsZero => UndefinedPolicy::CountAsZero,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct PostprocFlags {
    /// NP probability above which a pixel is foreground.
    #[arg(long)]
    pub fg_threshold: Option<f64>,
    /// HV energy below which a foreground pixel seeds a marker.
    #[arg(long)]
    pub marker_threshold: Option<f64>,
    /// Smallest marker kept, in pixels.
    #[arg(long)]
    pub min_marker: Option<usize>,
    /// Smallest instance kept, in pixels.
    #[arg(long)]
    pub min_instance: Option<usize>,
}

impl PostprocFlags {
    pub fn apply(&self, p: &mut PostprocParams) {
        set(&mut p.fg_threshold, self.fg_threshold);
        set(&mut p.marker_threshold, self.marker_threshold);
        set(&mut p.min_marker, self.min_marker);
        set(&mut p.min_instance, self.min_instance);
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// Sampling seed for mini-batches.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight initialization seed.
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Validation cadence in steps.
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub w_mse: Option<f64>,
    #[arg(long)]
    pub w_ce: Option<f64>,
    #[arg(long)]
    pub w_dice: Option<f64>,
    #[arg(long, value_enum)]
    pub block: Option<BlockArg>,
    /// Validation fold (0-4) held out from training.
    #[arg(long)]
    pub fold: Option<usize>,
    /// Seed of the fold permutation.
    #[arg(long)]
    pub fold_seed: Option<u64>,
}

impl TrainFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.seed, self.seed);
        set(&mut c.init_seed, self.init_seed);
        set(&mut c.fold_seed, self.fold_seed);
        if self.fold.is_some() {
            c.fold = self.fold;
        }
        c.train.seed = c.seed;
        set(&mut c.train.steps, self.steps);
        set(&mut c.train.batch_size, self.batch_size);
        set(&mut c.train.adam.lr, self.lr);
        set(&mut c.train.eval_every, self.eval_every);
        set(&mut c.train.loss.mse, self.w_mse);
        set(&mut c.train.loss.ce, self.w_ce);
        set(&mut c.train.loss.dice, self.w_dice);
        if let Some(b) = self.block {
            c.net.block_kind = b.into();
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalFlags {
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    /// Treatment of classes with no instances in either archive.
    #[arg(long, value_enum)]
    pub undefined_policy: Option<PolicyArg>,
}

impl EvalFlags {
    pub fn apply(&self, c: &mut RunConfig) {
        if let Some(a) = self.aggregation {
            c.aggregation = a.into();
        }
        if let Some(p) = self.undefined_policy {
            c.undefined_policy = p.into();
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
