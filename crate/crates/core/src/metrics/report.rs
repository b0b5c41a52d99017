//! Evaluation reports in JSON and CSV form.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::eval::{Aggregation, Evaluation};
use super::pq::{pq_of, PqTally, UndefinedPolicy};
use super::r2::{multi_r, CountTable};
use crate::classes::{ClassOrder, NUM_CLASSES};
use crate::error::Result;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Defined,
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// 0 for the merged binary row.
    pub class: u8,
    pub name: String,
    pub status: Status,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub sum_iou: f64,
    pub dq: Option<f64>,
    pub sq: Option<f64>,
    pub pq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

impl ClassReport {
    fn new(class: u8, name: &str, tally: &PqTally) -> Self {
        let score = pq_of(tally);
        Self {
            class,
            name: name.to_string(),
            status: if score.is_some() {
                Status::Defined
            } else {
                Status::Undefined
            },
            tp: tally.tp,
            fp: tally.fp,
            fn_: tally.fn_,
            sum_iou: tally.iou_sum.value(),
            dq: score.map(|s| s.dq),
            sq: score.map(|s| s.sq),
            pq: score.map(|s| s.pq),
            r2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub patches: usize,
    pub aggregation: Aggregation,
    pub undefined_policy: UndefinedPolicy,
    /// All classes merged.
    pub binary: ClassReport,
    pub per_class: Vec<ClassReport>,
    /// PQ with all classes merged under the chosen aggregation.
    pub pq: Option<f64>,
    pub mpq: Option<f64>,
    pub multi_r: Option<f64>,
}

impl EvalReport {
    /// Tallies and per-class PQ are always dataset-accumulated; `pq` and
    /// `mpq` follow `aggregation`.
    pub fn build(
        eval: &Evaluation,
        counts: Option<&CountTable>,
        aggregation: Aggregation,
        policy: UndefinedPolicy,
        order: &ClassOrder,
    ) -> Self {
        let mut per_class: Vec<ClassReport> = (0..NUM_CLASSES)
            .map(|c| ClassReport::new(c as u8 + 1, order.name(c as u8 + 1), &eval.total.per_class[c]))
            .collect();
        let mut multi = None;
        if let Some(m) = counts.and_then(|t| multi_r(t).ok()) {
            for (row, r2) in per_class.iter_mut().zip(m.per_class) {
                row.r2 = r2;
            }
            multi = Some(m.mean);
        }
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            patches: eval.len(),
            aggregation,
            undefined_policy: policy,
            binary: ClassReport::new(0, "all", &eval.total.binary),
            per_class,
            pq: eval.binary_pq(aggregation).ok(),
            mpq: eval.mpq(aggregation, policy).ok(),
            multi_r: multi,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per class plus summary rows; undefined values print as
    /// `undefined`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record([
            "row", "class", "name", "tp", "fp", "fn", "sum_iou", "dq", "sq", "pq", "r2",
        ])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        for r in std::iter::once(&self.binary).chain(&self.per_class) {
            w.write_record([
                if r.class == 0 { "binary" } else { "class" }.to_string(),
                r.class.to_string(),
                r.name.clone(),
                r.tp.to_string(),
                r.fp.to_string(),
                r.fn_.to_string(),
                r.sum_iou.to_string(),
                opt(r.dq),
                opt(r.sq),
                opt(r.pq),
                if r.class == 0 { String::new() } else { opt(r.r2) },
            ])?;
        }
        let blank = || String::new();
        w.write_record([
            "pq".to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            opt(self.pq),
            blank(),
        ])?;
        w.write_record([
            "mpq".to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            opt(self.mpq),
            blank(),
        ])?;
        w.write_record([
            "multi_r".to_string(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            opt(self.multi_r),
        ])?;
        w.flush()?;
        Ok(())
    }
}
