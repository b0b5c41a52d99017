//! Instance matching by IoU > 0.5.
//!
//! With a strict 0.5 threshold two instances of one map cannot both overlap
//! the same counterpart by more than half of their union, so matching needs
//! no assignment search: every overlapping pair above the threshold is a
//! match. Overlaps are enumerated in a single pass over the pixels.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::postproc::ClassedInstances;

/// Matches require IoU strictly above this.
pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchedPair {
    pub gt: u32,
    pub pred: u32,
    pub intersection: u64,
    pub union: u64,
}

impl MatchedPair {
    pub fn iou(&self) -> f64 {
        self.intersection as f64 / self.union as f64
    }
}

/// Matches for one class (or all classes merged).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchResult {
    /// Sorted by ground-truth id.
    pub pairs: Vec<MatchedPair>,
    /// Unmatched ground-truth ids (false negatives), ascending.
    pub unmatched_gt: Vec<u32>,
    /// Unmatched predicted ids (false positives), ascending.
    pub unmatched_pred: Vec<u32>,
}

/// Pairwise pixel overlaps between two instance maps.
#[derive(Debug, Clone)]
pub struct OverlapTable<'a> {
    gt: &'a ClassedInstances,
    pred: &'a ClassedInstances,
    gt_area: Vec<u64>,
    pred_area: Vec<u64>,
    /// `(gt id, pred id, intersection)`, sorted by ids.
    overlaps: Vec<(u32, u32, u64)>,
}

impl<'a> OverlapTable<'a> {
    pub fn new(gt: &'a ClassedInstances, pred: &'a ClassedInstances) -> Result<Self> {
        if gt.dims() != pred.dims() {
            return Err(Error::Invalid(format!(
                "ground truth is {:?} but prediction is {:?}",
                gt.dims(),
                pred.dims()
            )));
        }
        let mut gt_area = vec![0u64; gt.count() as usize + 1];
        let mut pred_area = vec![0u64; pred.count() as usize + 1];
        let mut inter: HashMap<(u32, u32), u64> = HashMap::new();
        let g = gt.instances().labels().data();
        let p = pred.instances().labels().data();
        for (&a, &b) in g.iter().zip(p) {
            gt_area[a as usize] += 1;
            pred_area[b as usize] += 1;
            if a != 0 && b != 0 {
                *inter.entry((a, b)).or_default() += 1;
            }
        }
        let mut overlaps: Vec<(u32, u32, u64)> = inter.into_iter().map(|((a, b), n)| (a, b, n)).collect();
        overlaps.sort_unstable();
        Ok(Self {
            gt,
            pred,
            gt_area,
            pred_area,
            overlaps,
        })
    }

    /// Matching restricted to instances of `class` on both sides, or over
    /// all instances when `class` is `None`.
    pub fn matches(&self, class: Option<u8>) -> MatchResult {
        let keep_gt = |id: u32| class.map_or(true, |c| self.gt.class_of(id) == c);
        let keep_pred = |id: u32| class.map_or(true, |c| self.pred.class_of(id) == c);
        let mut gt_hit = vec![false; self.gt_area.len()];
        let mut pred_hit = vec![false; self.pred_area.len()];
        let mut pairs = Vec::new();
        for &(g, p, n) in &self.overlaps {
            if !keep_gt(g) || !keep_pred(p) {
                continue;
            }
            let union = self.gt_area[g as usize] + self.pred_area[p as usize] - n;
            // iou > 0.5  ⇔  2·intersection > union, decided in integers.
            if 2 * n > union {
                debug_assert!(!gt_hit[g as usize] && !pred_hit[p as usize]);
                gt_hit[g as usize] = true;
                pred_hit[p as usize] = true;
                pairs.push(MatchedPair {
                    gt: g,
                    pred: p,
                    intersection: n,
                    union,
                });
            }
        }
        let unmatched_gt = (1..=self.gt.count())
            .filter(|&id| keep_gt(id) && !gt_hit[id as usize])
            .collect();
        let unmatched_pred = (1..=self.pred.count())
            .filter(|&id| keep_pred(id) && !pred_hit[id as usize])
            .collect();
        MatchResult {
            pairs,
            unmatched_gt,
            unmatched_pred,
        }
    }
}

pub fn match_instances(gt: &ClassedInstances, pred: &ClassedInstances, class: Option<u8>) -> Result<MatchResult> {
    Ok(OverlapTable::new(gt, pred)?.matches(class))
}
