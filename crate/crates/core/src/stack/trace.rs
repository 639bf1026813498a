//! Per-message instrumentation events.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::model::{NodeId, TopicId};

/// Instrumentation points along one message's path, in path order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    AppPublish,
    ClientPublish,
    AdapterPublish,
    SerializeBegin,
    SerializeEnd,
    WireSend,
    WireRecvComplete,
    AdapterDeliver,
    ClientDeliver,
    CallbackBegin,
    CallbackEnd,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::AppPublish,
        Stage::ClientPublish,
        Stage::AdapterPublish,
        Stage::SerializeBegin,
        Stage::SerializeEnd,
        Stage::WireSend,
        Stage::WireRecvComplete,
        Stage::AdapterDeliver,
        Stage::ClientDeliver,
        Stage::CallbackBegin,
        Stage::CallbackEnd,
    ];

    /// Stages stamped on the publishing node.
    pub const PUBLISHER: [Stage; 6] = [
        Stage::AppPublish,
        Stage::ClientPublish,
        Stage::AdapterPublish,
        Stage::SerializeBegin,
        Stage::SerializeEnd,
        Stage::WireSend,
    ];

    /// Stages stamped on each receiving node.
    pub const SUBSCRIBER: [Stage; 5] = [
        Stage::WireRecvComplete,
        Stage::AdapterDeliver,
        Stage::ClientDeliver,
        Stage::CallbackBegin,
        Stage::CallbackEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::AppPublish => "APP_PUBLISH",
            Stage::ClientPublish => "CLIENT_PUBLISH",
            Stage::AdapterPublish => "ADAPTER_PUBLISH",
            Stage::SerializeBegin => "SERIALIZE_BEGIN",
            Stage::SerializeEnd => "SERIALIZE_END",
            Stage::WireSend => "WIRE_SEND",
            Stage::WireRecvComplete => "WIRE_RECV_COMPLETE",
            Stage::AdapterDeliver => "ADAPTER_DELIVER",
            Stage::ClientDeliver => "CLIENT_DELIVER",
            Stage::CallbackBegin => "CALLBACK_BEGIN",
            Stage::CallbackEnd => "CALLBACK_END",
        }
    }

    pub fn is_publisher_side(self) -> bool {
        self <= Stage::WireSend
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub run_id: Arc<str>,
    pub node_id: NodeId,
    pub topic_id: TopicId,
    pub seq: u32,
    pub stage: Stage,
    pub ts_ns: u64,
}

/// Appends events for one node.
#[derive(Debug)]
pub struct Tracer {
    run_id: Arc<str>,
    node_id: NodeId,
    events: Vec<TraceEvent>,
}

impl Tracer {
    pub fn new(run_id: Arc<str>, node_id: NodeId) -> Self {
        Tracer {
            run_id,
            node_id,
            events: Vec::new(),
        }
    }

    pub fn reserve(&mut self, additional: usize) {
        self.events.reserve(additional);
    }

    pub fn record(&mut self, topic_id: TopicId, seq: u32, stage: Stage, ts_ns: u64) {
        self.events.push(TraceEvent {
            run_id: self.run_id.clone(),
            node_id: self.node_id,
            topic_id,
            seq,
            stage,
            ts_ns,
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip_and_order() {
        for (i, s) in Stage::ALL.iter().enumerate() {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), *s);
            assert_eq!(s.is_publisher_side(), i < 6);
        }
        assert!(Stage::ALL.windows(2).all(|w| w[0] < w[1]));
        assert!("WIRE_SEN".parse::<Stage>().is_err());
    }
}
