//! Statistics over run artifacts. Every function here is pure: the same
//! records, in any order, give the same result.

use thiserror::Error;

use crate::model::{NodeId, TopicId};

pub mod categories;
pub mod fairness;
pub mod layers;
pub mod stats;
pub mod summary;
pub mod timeline;

pub use categories::{categorize, loss_rate, pair_losses, CategoryCounts, PairLoss};
pub use fairness::{fairness, FairnessReport};
pub use layers::{layer_breakdown, LayerBreakdown, PairStats, SpanStats};
pub use stats::{latency_stats, mean_ns, LatencyStats};
pub use summary::{analyze, AnalysisOptions, RunReport, DEFAULT_TIMELINE_BIN_NS};
pub use timeline::timeline;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("no latencies to summarize")]
    EmptyInput,
    #[error("loss rate is undefined when nothing was sent")]
    NothingSent,
    #[error("fairness needs at least 2 subscribers with deliveries, found {0}")]
    TooFewSubscribers(usize),
    #[error(
        "topic {topic_id} seq {seq} at subscriber {subscriber}: latency {latency_ns} ns is \
         classified inconsistently with period {period_ns} ns"
    )]
    PeriodMismatch {
        topic_id: TopicId,
        seq: u32,
        subscriber: NodeId,
        latency_ns: u64,
        period_ns: u64,
    },
    #[error("timeline bin width must be positive")]
    ZeroBin,
}
