use serde::{Deserialize, Serialize};

use crate::classes::{CountVector, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::label::LabelMap;

/// Instance label map whose ids are exactly `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMap {
    labels: LabelMap,
    count: u32,
}

impl InstanceMap {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            labels: LabelMap::zeros(height, width),
            count: 0,
        }
    }

    /// Renumbers arbitrary instance ids to `1..=K` in row-major order of
    /// first appearance.
    pub fn relabel(labels: &LabelMap) -> Self {
        let mut map = std::collections::HashMap::new();
        let mut next = 0u32;
        let out = labels.map(|v| {
            if v == 0 {
                0
            } else {
                *map.entry(v).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        });
        Self {
            labels: out,
            count: next,
        }
    }

    /// Accepts `labels` as-is if its ids are already gapless.
    pub fn from_gapless(labels: LabelMap) -> Result<Self> {
        let k = labels.max_label();
        let mut seen = vec![false; k as usize + 1];
        for &v in labels.data() {
            seen[v as usize] = true;
        }
        if let Some(missing) = (1..=k as usize).find(|&i| !seen[i]) {
            return Err(Error::Invalid(format!(
                "instance ids not gapless: {missing} missing of 1..={k}"
            )));
        }
        Ok(Self { labels, count: k })
    }

    pub fn labels(&self) -> &LabelMap {
        &self.labels
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    /// Pixel area per id; index 0 is background.
    pub fn areas(&self) -> Vec<usize> {
        let mut a = vec![0usize; self.count as usize + 1];
        for &v in self.labels.data() {
            a[v as usize] += 1;
        }
        a
    }
}

/// Instances with one class in `1..=6` each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassedInstances {
    instances: InstanceMap,
    /// `class_of[id - 1]`.
    class_of: Vec<u8>,
}

impl ClassedInstances {
    pub fn new(instances: InstanceMap, class_of: Vec<u8>) -> Result<Self> {
        if class_of.len() != instances.count() as usize {
            return Err(Error::Invalid(format!(
                "{} class entries for {} instances",
                class_of.len(),
                instances.count()
            )));
        }
        if let Some(&c) = class_of.iter().find(|&&c| c == 0 || c as usize > NUM_CLASSES) {
            return Err(Error::LabelRange {
                value: c as i64,
                max: NUM_CLASSES as i64,
            });
        }
        Ok(Self { instances, class_of })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            instances: InstanceMap::empty(height, width),
            class_of: Vec::new(),
        }
    }

    /// Builds from an instance channel and a per-pixel class channel, as in
    /// the two-channel label archives. Ids are relabelled gapless; each
    /// instance takes its most frequent nonzero class (smallest id on ties).
    pub fn from_maps(instances: &LabelMap, classes: &LabelMap) -> Result<Self> {
        if instances.dims() != classes.dims() {
            return Err(Error::Invalid("instance and class maps differ in size".into()));
        }
        let inst = InstanceMap::relabel(instances);
        let k = inst.count() as usize;
        let mut votes = vec![[0usize; NUM_CLASSES + 1]; k + 1];
        for (&id, &c) in inst.labels().data().iter().zip(classes.data()) {
            if c as usize > NUM_CLASSES {
                return Err(Error::LabelRange {
                    value: c as i64,
                    max: NUM_CLASSES as i64,
                });
            }
            votes[id as usize][c as usize] += 1;
        }
        let mut class_of = Vec::with_capacity(k);
        for (id, v) in votes.iter().enumerate().skip(1) {
            let mut best = 0;
            for c in 1..=NUM_CLASSES {
                if v[c] > 0 && (best == 0 || v[c] > v[best]) {
                    best = c;
                }
            }
            if best == 0 {
                return Err(Error::Invalid(format!("instance {id} has no class pixels")));
            }
            class_of.push(best as u8);
        }
        Ok(Self {
            instances: inst,
            class_of,
        })
    }

    pub fn instances(&self) -> &InstanceMap {
        &self.instances
    }

    pub fn count(&self) -> u32 {
        self.instances.count()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.instances.dims()
    }

    /// Class of instance `id` (`1..=K`).
    pub fn class_of(&self, id: u32) -> u8 {
        self.class_of[id as usize - 1]
    }

    pub fn classes(&self) -> &[u8] {
        &self.class_of
    }

    /// Per-pixel class channel: the instance's class, 0 on background.
    pub fn class_map(&self) -> LabelMap {
        self.instances.labels().map(|id| {
            if id == 0 {
                0
            } else {
                self.class_of[id as usize - 1] as u32
            }
        })
    }

    pub fn counts(&self) -> CountVector {
        counts_from(self)
    }
}

/// Number of instances per class.
pub fn counts_from(classed: &ClassedInstances) -> CountVector {
    let mut counts = CountVector::default();
    for &c in &classed.class_of {
        counts[c as usize - 1] += 1;
    }
    counts
}
