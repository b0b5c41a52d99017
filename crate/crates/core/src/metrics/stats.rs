//! Per-class instance totals over a label archive.

use serde::{Deserialize, Serialize};

use crate::classes::{ClassOrder, CountVector, NUM_CLASSES};
use crate::error::Result;
use crate::io::LabelReader;
use crate::postproc::ClassedInstances;

/// Streams every patch of `reader`, summing instance counts per class.
pub fn dataset_stats(reader: &mut LabelReader) -> Result<CountVector> {
    let mut total = CountVector::default();
    for i in 0..reader.len() {
        total.add(&reader.read_patch(i)?.counts());
    }
    Ok(total)
}

pub fn stats_of(patches: &[ClassedInstances]) -> CountVector {
    let mut total = CountVector::default();
    for p in patches {
        total.add(&p.counts());
    }
    total
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTotal {
    pub class: u8,
    pub name: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub patches: usize,
    pub total: u64,
    pub classes: Vec<ClassTotal>,
}

impl StatsReport {
    pub fn new(patches: usize, counts: &CountVector, order: &ClassOrder) -> Self {
        Self {
            schema_version: super::REPORT_SCHEMA_VERSION,
            patches,
            total: counts.total(),
            classes: (0..NUM_CLASSES)
                .map(|c| ClassTotal {
                    class: c as u8 + 1,
                    name: order.name(c as u8 + 1).to_string(),
                    count: counts[c],
                })
                .collect(),
        }
    }

    pub fn count_of(&self, name: &str) -> Option<u64> {
        self.classes
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .map(|c| c.count)
    }
}
