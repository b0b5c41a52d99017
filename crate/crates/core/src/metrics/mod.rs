//! Instance matching, panoptic quality and count regression metrics.

mod eval;
mod matching;
mod pq;
mod r2;
mod report;
mod stats;

pub use eval::{evaluate, evaluate_with_workers, score_image, Aggregation, Evaluation, ImageTally};
pub use matching::{match_instances, MatchResult, MatchedPair, OverlapTable, IOU_THRESHOLD};
pub use pq::{mpq, pq_of, IouSum, PqScore, PqTally, UndefinedPolicy};
pub use r2::{multi_r, r_squared, CountTable, MultiR};
pub use report::{ClassReport, EvalReport, Status, REPORT_SCHEMA_VERSION};
pub use stats::{dataset_stats, stats_of, ClassTotal, StatsReport};
