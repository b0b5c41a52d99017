//! Dataset-level PQ evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matching::OverlapTable;
use super::pq::{mpq, pq_of, PqScore, PqTally, UndefinedPolicy};
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::postproc::ClassedInstances;

/// How tallies become scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Accumulate TP/FP/FN and IoU over all patches, then score once.
    #[default]
    Dataset,
    /// Score each patch, then average over patches where the score exists.
    PerImage,
}

/// Tallies for one patch pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImageTally {
    pub per_class: [PqTally; NUM_CLASSES],
    /// All classes merged.
    pub binary: PqTally,
}

impl ImageTally {
    pub fn merge(&mut self, other: &ImageTally) {
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            a.merge(b);
        }
        self.binary.merge(&other.binary);
    }

    pub fn class_scores(&self) -> [Option<PqScore>; NUM_CLASSES] {
        std::array::from_fn(|c| pq_of(&self.per_class[c]))
    }
}

pub fn score_image(gt: &ClassedInstances, pred: &ClassedInstances) -> Result<ImageTally> {
    let table = OverlapTable::new(gt, pred)?;
    Ok(ImageTally {
        per_class: std::array::from_fn(|c| PqTally::from_match(&table.matches(Some(c as u8 + 1)))),
        binary: PqTally::from_match(&table.matches(None)),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    /// In patch order.
    pub images: Vec<ImageTally>,
    pub total: ImageTally,
}

impl Evaluation {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Dataset-accumulated per-class scores.
    pub fn class_scores(&self) -> [Option<PqScore>; NUM_CLASSES] {
        self.total.class_scores()
    }

    pub fn mpq(&self, aggregation: Aggregation, policy: UndefinedPolicy) -> Result<f64> {
        match aggregation {
            Aggregation::Dataset => mpq(&self.class_scores(), policy),
            Aggregation::PerImage => {
                let per: Vec<f64> = self
                    .images
                    .iter()
                    .filter_map(|t| mpq(&t.class_scores(), policy).ok())
                    .collect();
                mean_or_undefined(&per, "mPQ")
            }
        }
    }

    /// PQ with all classes merged into one.
    pub fn binary_pq(&self, aggregation: Aggregation) -> Result<f64> {
        match aggregation {
            Aggregation::Dataset => pq_of(&self.total.binary)
                .map(|s| s.pq)
                .ok_or_else(|| Error::Undefined("no instances in ground truth or prediction".into())),
            Aggregation::PerImage => {
                let per: Vec<f64> = self
                    .images
                    .iter()
                    .filter_map(|t| pq_of(&t.binary))
                    .map(|s| s.pq)
                    .collect();
                mean_or_undefined(&per, "PQ")
            }
        }
    }
}

fn mean_or_undefined(values: &[f64], what: &str) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Undefined(format!("{what} undefined on every patch")));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Scores aligned patch pairs on the current rayon pool.
pub fn evaluate(gt: &[ClassedInstances], pred: &[ClassedInstances]) -> Result<Evaluation> {
    if gt.len() != pred.len() {
        return Err(Error::Invalid(format!(
            "{} ground-truth patches but {} predicted",
            gt.len(),
            pred.len()
        )));
    }
    let images: Vec<ImageTally> = gt
        .par_iter()
        .zip(pred.par_iter())
        .enumerate()
        .map(|(i, (g, p))| {
            if g.dims() != p.dims() {
                return Err(Error::Patch {
                    index: i,
                    reason: format!("ground truth is {:?} but prediction is {:?}", g.dims(), p.dims()),
                });
            }
            score_image(g, p)
        })
        .collect::<Result<_>>()?;
    let total = images.par_iter().copied().reduce(ImageTally::default, |mut a, b| {
        a.merge(&b);
        a
    });
    Ok(Evaluation { images, total })
}

/// [`evaluate`] on a dedicated pool of `workers` threads.
pub fn evaluate_with_workers(gt: &[ClassedInstances], pred: &[ClassedInstances], workers: usize) -> Result<Evaluation> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| evaluate(gt, pred))
}
