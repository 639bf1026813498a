//! The instrumented middleware stack a node runs: clock, executor,
//! serialization, trace points, and the node itself.

pub mod clock;
pub mod executor;
pub mod node;
pub mod records;
pub mod serialize;
pub mod trace;

pub use clock::{Clock, CostModel, MonotonicClock, VirtualClock, Work};
pub use executor::{Executor, Handler, TimerId, TimerSpec};
pub use node::{
    base_payload, stamp_seq, MessageCallback, Node, NodeOutput, NodeSettings, NodeStats,
    PublishOutcome, PublisherSpec, SubscriptionSpec,
};
pub use records::{DeliveryStatus, PublisherRecord, SampleRecord, SendStatus};
pub use serialize::{serialize, MessageHeader, MESSAGE_HEADER_LEN};
pub use trace::{Stage, TraceEvent, Tracer};
