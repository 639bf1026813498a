//! Per-message outcome records.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::model::{NodeId, TopicId};

/// Delivery outcome of one message at one subscriber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeliveryStatus {
    /// Latency at most one publish period.
    InTime,
    /// Delivered, but later than one publish period.
    Late,
    /// Published but never delivered.
    Lost,
}

impl DeliveryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryStatus::InTime => "IN_TIME",
            DeliveryStatus::Late => "LATE",
            DeliveryStatus::Lost => "LOST",
        }
    }

    pub fn classify(latency_ns: u64, period_ns: u64) -> Self {
        if latency_ns <= period_ns {
            DeliveryStatus::InTime
        } else {
            DeliveryStatus::Late
        }
    }
}

impl fmt::Display for DeliveryStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeliveryStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IN_TIME" => Ok(DeliveryStatus::InTime),
            "LATE" => Ok(DeliveryStatus::Late),
            "LOST" => Ok(DeliveryStatus::Lost),
            _ => Err(format!("unknown delivery status {s:?}")),
        }
    }
}

/// What became of one scheduled publish tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SendStatus {
    /// Published within one period of its scheduled instant.
    SentInTime,
    SentLate,
    /// The tick never executed inside the measurement window.
    Unsent,
}

impl SendStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SendStatus::SentInTime => "SENT_IN_TIME",
            SendStatus::SentLate => "SENT_LATE",
            SendStatus::Unsent => "UNSENT",
        }
    }

    pub fn is_sent(self) -> bool {
        self != SendStatus::Unsent
    }
}

impl fmt::Display for SendStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SendStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SENT_IN_TIME" => Ok(SendStatus::SentInTime),
            "SENT_LATE" => Ok(SendStatus::SentLate),
            "UNSENT" => Ok(SendStatus::Unsent),
            _ => Err(format!("unknown send status {s:?}")),
        }
    }
}

/// One (message, subscriber) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub run_id: Arc<str>,
    pub topic_id: TopicId,
    pub publisher_node: NodeId,
    pub subscriber_node: NodeId,
    pub seq: u32,
    pub publish_ts_ns: u64,
    /// `CALLBACK_BEGIN` at the subscriber; absent when lost.
    pub receive_ts_ns: Option<u64>,
    pub latency_ns: Option<u64>,
    pub status: DeliveryStatus,
}

/// One scheduled publish tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublisherRecord {
    pub run_id: Arc<str>,
    pub topic_id: TopicId,
    pub publisher_node: NodeId,
    pub seq: u32,
    pub scheduled_ns: u64,
    /// `APP_PUBLISH`; absent when unsent.
    pub publish_ts_ns: Option<u64>,
    pub status: SendStatus,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_names_roundtrip() {
        for s in [
            DeliveryStatus::InTime,
            DeliveryStatus::Late,
            DeliveryStatus::Lost,
        ] {
            assert_eq!(s.as_str().parse::<DeliveryStatus>().unwrap(), s);
        }
        for s in [
            SendStatus::SentInTime,
            SendStatus::SentLate,
            SendStatus::Unsent,
        ] {
            assert_eq!(s.as_str().parse::<SendStatus>().unwrap(), s);
        }
        assert!("in_time".parse::<DeliveryStatus>().is_err());
    }

    #[test]
    fn classification_boundary_is_inclusive() {
        assert_eq!(DeliveryStatus::classify(10, 10), DeliveryStatus::InTime);
        assert_eq!(DeliveryStatus::classify(11, 10), DeliveryStatus::Late);
    }
}
