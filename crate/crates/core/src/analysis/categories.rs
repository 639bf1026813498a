//! Message outcome counts and loss rates.

use std::collections::BTreeMap;

use super::AnalysisError;
use crate::model::NodeId;
use crate::stack::{DeliveryStatus, PublisherRecord, SampleRecord, SendStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CategoryCounts {
    pub in_time: u64,
    pub late: u64,
    pub lost: u64,
    pub sent_in_time: u64,
    pub sent_late: u64,
    pub unsent: u64,
}

impl CategoryCounts {
    pub fn scheduled(&self) -> u64 {
        self.sent_in_time + self.sent_late + self.unsent
    }

    pub fn sent(&self) -> u64 {
        self.sent_in_time + self.sent_late
    }

    pub fn delivered(&self) -> u64 {
        self.in_time + self.late
    }
}

/// Counts both sides of a run. Delivered samples must be classified
/// consistently with `period_ns`.
pub fn categorize(
    samples: &[SampleRecord],
    publisher_records: &[PublisherRecord],
    period_ns: u64,
) -> Result<CategoryCounts, AnalysisError> {
    let mut c = CategoryCounts::default();
    for s in samples {
        if let Some(latency_ns) = s.latency_ns {
            if DeliveryStatus::classify(latency_ns, period_ns) != s.status {
                return Err(AnalysisError::PeriodMismatch {
                    topic_id: s.topic_id,
                    seq: s.seq,
                    subscriber: s.subscriber_node,
                    latency_ns,
                    period_ns,
                });
            }
        }
        match s.status {
            DeliveryStatus::InTime => c.in_time += 1,
            DeliveryStatus::Late => c.late += 1,
            DeliveryStatus::Lost => c.lost += 1,
        }
    }
    for r in publisher_records {
        match r.status {
            SendStatus::SentInTime => c.sent_in_time += 1,
            SendStatus::SentLate => c.sent_late += 1,
            SendStatus::Unsent => c.unsent += 1,
        }
    }
    Ok(c)
}

/// Percentage of `sent` messages that were lost.
pub fn loss_rate(lost: u64, sent: u64) -> Result<f64, AnalysisError> {
    if sent == 0 {
        return Err(AnalysisError::NothingSent);
    }
    Ok(100.0 * lost as f64 / sent as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub publisher: NodeId,
    pub subscriber: NodeId,
    /// Messages the publisher sent to this subscriber (one sample each).
    pub sent: u64,
    pub lost: u64,
    pub pct: f64,
}

/// Loss per (publisher, subscriber) pair, ordered by pair.
pub fn pair_losses(samples: &[SampleRecord]) -> Vec<PairLoss> {
    let mut pairs: BTreeMap<(NodeId, NodeId), (u64, u64)> = BTreeMap::new();
    for s in samples {
        let e = pairs
            .entry((s.publisher_node, s.subscriber_node))
            .or_default();
        e.0 += 1;
        if s.status == DeliveryStatus::Lost {
            e.1 += 1;
        }
    }
    pairs
        .into_iter()
        .map(|((publisher, subscriber), (sent, lost))| PairLoss {
            publisher,
            subscriber,
            sent,
            lost,
            pct: 100.0 * lost as f64 / sent as f64,
        })
        .collect()
}
