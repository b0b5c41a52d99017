//! Panoptic quality: tallies, per-class scores and their mean.

use serde::{Deserialize, Serialize};

use super::matching::MatchResult;
use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};

const IOU_SCALE: f64 = (1u64 << 53) as f64;

/// Exact sum of IoU values in `[0.5, 1]`.
///
/// Every f64 in that range is an integer multiple of 2⁻⁵³, so the sum is
/// kept as an integer count of 2⁻⁵³ units. Addition is then associative and
/// commutative, which makes dataset totals independent of accumulation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct IouSum(u128);

impl IouSum {
    pub fn add(&mut self, iou: f64) {
        assert!((0.5..=1.0).contains(&iou), "IoU {iou} outside the matched range");
        self.0 += (iou * IOU_SCALE) as u128;
    }

    pub fn merge(&mut self, other: IouSum) {
        self.0 += other.0;
    }

    pub fn value(&self) -> f64 {
        self.0 as f64 / IOU_SCALE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct PqTally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub iou_sum: IouSum,
}

impl PqTally {
    pub fn from_match(m: &MatchResult) -> Self {
        let mut t = PqTally::default();
        t.add_match(m);
        t
    }

    pub fn add_match(&mut self, m: &MatchResult) {
        self.tp += m.pairs.len() as u64;
        self.fp += m.unmatched_pred.len() as u64;
        self.fn_ += m.unmatched_gt.len() as u64;
        for p in &m.pairs {
            self.iou_sum.add(p.iou());
        }
    }

    pub fn merge(&mut self, other: &PqTally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.iou_sum.merge(other.iou_sum);
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PqScore {
    pub dq: f64,
    pub sq: f64,
    pub pq: f64,
}

/// `dq = TP / (TP + FP/2 + FN/2)`, `sq = ΣIoU / TP` (0 without TP),
/// `pq = dq · sq`. `None` when the class never occurs on either side.
pub fn pq_of(tally: &PqTally) -> Option<PqScore> {
    if tally.is_empty() {
        return None;
    }
    let tp = tally.tp as f64;
    let dq = tp / (tp + 0.5 * tally.fp as f64 + 0.5 * tally.fn_ as f64);
    let sq = if tally.tp == 0 { 0.0 } else { tally.iou_sum.value() / tp };
    Some(PqScore { dq, sq, pq: dq * sq })
}

/// How classes with no instances on either side enter the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndefinedPolicy {
    #[default]
    Skip,
    CountAsZero,
}

/// Mean PQ over the six classes.
pub fn mpq(per_class: &[Option<PqScore>; NUM_CLASSES], policy: UndefinedPolicy) -> Result<f64> {
    let defined: Vec<f64> = per_class.iter().flatten().map(|s| s.pq).collect();
    if defined.is_empty() {
        return Err(Error::Undefined("no class occurs in ground truth or prediction".into()));
    }
    let denom = match policy {
        UndefinedPolicy::Skip => defined.len(),
        UndefinedPolicy::CountAsZero => NUM_CLASSES,
    };
    Ok(defined.iter().sum::<f64>() / denom as f64)
}
