//! A benchmark node: publishers, subscriptions, and the reliability protocol
//! layered over one [`Endpoint`].
//!
//! Publishing walks the instrumented path client → adapter → serializer →
//! transport hand-off, then fragments the serialized body and fans it out
//! fragment-major. The destination order rotates with the sequence number so
//! no subscriber is always served last.
//!
//! Under RELIABLE, receivers NACK incomplete messages on a repair timer and
//! publishers answer from a bounded history. Publishers also heartbeat their
//! last sequence number so a lost tail is noticed.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Duration;

use bytes::Bytes;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::clock::{Clock, Work};
use super::executor::{Executor, Handler, TimerId, TimerSpec};
use super::records::{DeliveryStatus, PublisherRecord, SampleRecord, SendStatus};
use super::serialize::{serialize, MessageHeader, MESSAGE_HEADER_LEN};
use super::trace::{Stage, TraceEvent, Tracer};
use crate::model::{BenchmarkConfig, NodeId, Reliability, TopicId};
use crate::transport::{
    fragment_count, fragment_ranges, CompletedMessage, Endpoint, FeedOutcome, Inbound, NackRecord,
    PacketType, ReassemblyBuffer, ReassemblyPolicy, StreamKey, WirePacket,
};

/// Serialized bytes a publisher keeps for repair.
const HISTORY_BYTES: usize = 16 * 1024 * 1024;
const MIN_HISTORY: usize = 4;
const MAX_HISTORY: usize = 64;
/// Error messages kept verbatim per node; the rest are only counted.
const MAX_ERROR_MESSAGES: usize = 16;

/// Random payload bytes shared by every message of one publisher.
pub fn base_payload(len: usize, seed: u64) -> Vec<u8> {
    let mut payload = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut payload);
    payload
}

/// Turns a base payload into message `seq`'s payload: the sequence number
/// overwrites the first four bytes (fewer for tiny payloads).
pub fn stamp_seq(payload: &mut [u8], seq: u32) {
    let n = payload.len().min(4);
    payload[..n].copy_from_slice(&seq.to_le_bytes()[..n]);
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSettings {
    pub run_id: Arc<str>,
    pub reliability: Reliability,
    pub fragment_limit: usize,
    pub repair_interval_ns: u64,
    pub max_repair_rounds: u32,
}

impl NodeSettings {
    pub fn from_config(config: &BenchmarkConfig) -> Self {
        NodeSettings {
            run_id: Arc::from(config.run_id.as_str()),
            reliability: config.reliability,
            fragment_limit: config.fragment_payload_bytes as usize,
            repair_interval_ns: config.repair_interval_ms * 1_000_000,
            max_repair_rounds: config.max_repair_rounds,
        }
    }

    fn reassembly_policy(&self) -> ReassemblyPolicy {
        match self.reliability {
            Reliability::BestEffort => ReassemblyPolicy::best_effort(),
            Reliability::Reliable => {
                ReassemblyPolicy::reliable(self.repair_interval_ns, self.max_repair_rounds)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublisherSpec {
    pub topic_id: TopicId,
    pub subscribers: Vec<NodeId>,
    pub payload_bytes: usize,
    pub period_ns: u64,
    /// Scheduled instant of tick 0.
    pub first_deadline_ns: u64,
    /// Ticks scheduled in the measurement window.
    pub message_count: u64,
    pub payload_seed: u64,
}

impl PublisherSpec {
    pub fn scheduled_ns(&self, seq: u32) -> u64 {
        self.first_deadline_ns + seq as u64 * self.period_ns
    }

    /// No tick starts at or after this instant.
    pub fn window_end_ns(&self) -> u64 {
        self.scheduled_ns(0) + self.message_count * self.period_ns
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubscriptionSpec {
    pub topic_id: TopicId,
    pub publisher_node: NodeId,
    pub period_ns: u64,
}

pub type MessageCallback = Box<dyn FnMut(&CompletedMessage) + Send>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishOutcome {
    pub seq: u32,
    pub publish_ts_ns: u64,
    pub fragment_count: usize,
    pub datagrams_sent: usize,
}

/// Counters a node keeps beyond its records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub datagrams_received: u64,
    pub malformed: u64,
    pub send_errors: u64,
    pub recv_errors: u64,
    pub nacks_sent: u64,
    pub nacks_received: u64,
    pub fragments_resent: u64,
    /// NACKs for messages no longer in the publisher's history.
    pub unrepairable: u64,
    pub heartbeats_sent: u64,
    pub abandoned: u64,
}

impl NodeStats {
    pub fn absorb(&mut self, other: &NodeStats) {
        self.datagrams_received += other.datagrams_received;
        self.malformed += other.malformed;
        self.send_errors += other.send_errors;
        self.recv_errors += other.recv_errors;
        self.nacks_sent += other.nacks_sent;
        self.nacks_received += other.nacks_received;
        self.fragments_resent += other.fragments_resent;
        self.unrepairable += other.unrepairable;
        self.heartbeats_sent += other.heartbeats_sent;
        self.abandoned += other.abandoned;
    }
}

/// Everything a node produced during a run.
#[derive(Debug)]
pub struct NodeOutput {
    pub node_id: NodeId,
    pub traces: Vec<TraceEvent>,
    pub samples: Vec<SampleRecord>,
    pub publisher_records: Vec<PublisherRecord>,
    pub stats: NodeStats,
    pub errors: Vec<String>,
}

#[derive(Debug)]
struct Sent {
    seq: u32,
    publish_ts_ns: u64,
    serialized: Bytes,
}

struct Publisher {
    spec: PublisherSpec,
    payload: Vec<u8>,
    next_seq: u32,
    last_sent: Option<(u32, u16)>,
    history: VecDeque<Sent>,
    history_depth: usize,
    records: Vec<PublisherRecord>,
}

impl Publisher {
    fn new(spec: PublisherSpec) -> Self {
        let payload = base_payload(spec.payload_bytes, spec.payload_seed);
        let per_message = (spec.payload_bytes + MESSAGE_HEADER_LEN).max(1);
        let history_depth = (HISTORY_BYTES / per_message).clamp(MIN_HISTORY, MAX_HISTORY);
        Publisher {
            records: Vec::with_capacity(spec.message_count.min(1 << 20) as usize),
            spec,
            payload,
            next_seq: 0,
            last_sent: None,
            history: VecDeque::new(),
            history_depth,
        }
    }

    fn stamp(&mut self, seq: u32) -> &[u8] {
        stamp_seq(&mut self.payload, seq);
        &self.payload
    }

    fn remember(&mut self, sent: Sent) {
        if self.history.len() == self.history_depth {
            self.history.pop_front();
        }
        self.history.push_back(sent);
    }

    fn finish(mut self, run_id: &Arc<str>, node: NodeId) -> Vec<PublisherRecord> {
        let first_unsent = self.records.len() as u64;
        for seq in first_unsent..self.spec.message_count {
            let seq = seq as u32;
            self.records.push(PublisherRecord {
                run_id: run_id.clone(),
                topic_id: self.spec.topic_id,
                publisher_node: node,
                seq,
                scheduled_ns: self.spec.scheduled_ns(seq),
                publish_ts_ns: None,
                status: SendStatus::Unsent,
            });
        }
        self.records
    }
}

struct Subscription {
    spec: SubscriptionSpec,
    callback: Option<MessageCallback>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimerRole {
    Publish(usize),
    Heartbeat,
    Repair,
}

pub struct Node<E: Endpoint> {
    id: NodeId,
    settings: NodeSettings,
    endpoint: E,
    publishers: Vec<Publisher>,
    subscriptions: Vec<Subscription>,
    reassembly: ReassemblyBuffer,
    timers: BTreeMap<TimerId, TimerRole>,
    tracer: Tracer,
    samples: Vec<SampleRecord>,
    stats: NodeStats,
    errors: Vec<String>,
}

impl<E: Endpoint> Node<E> {
    pub fn new(settings: NodeSettings, endpoint: E) -> Self {
        let id = endpoint.node_id();
        Node {
            id,
            reassembly: ReassemblyBuffer::new(settings.reassembly_policy()),
            tracer: Tracer::new(settings.run_id.clone(), id),
            settings,
            endpoint,
            publishers: Vec::new(),
            subscriptions: Vec::new(),
            timers: BTreeMap::new(),
            samples: Vec::new(),
            stats: NodeStats::default(),
            errors: Vec::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn endpoint(&self) -> &E {
        &self.endpoint
    }

    pub fn stats(&self) -> &NodeStats {
        &self.stats
    }

    pub fn traces(&self) -> &[TraceEvent] {
        self.tracer.events()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn add_publisher(&mut self, spec: PublisherSpec) -> usize {
        self.tracer
            .reserve((spec.message_count.min(100_000) as usize) * Stage::PUBLISHER.len());
        self.publishers.push(Publisher::new(spec));
        self.publishers.len() - 1
    }

    pub fn add_subscription(&mut self, spec: SubscriptionSpec, callback: Option<MessageCallback>) {
        self.subscriptions.push(Subscription { spec, callback });
    }

    pub fn subscription_count(&self) -> usize {
        self.subscriptions.len()
    }

    /// Registers this node's timers: one per publisher, plus heartbeat and
    /// repair timers under RELIABLE. Protocol timers start at `start_ns`.
    pub fn attach<C: Clock>(&mut self, exec: &mut Executor<C>, start_ns: u64) {
        for (i, p) in self.publishers.iter().enumerate() {
            let id = exec.add_timer(TimerSpec {
                first_deadline_ns: p.spec.first_deadline_ns,
                period_ns: p.spec.period_ns,
                max_ticks: Some(p.spec.message_count),
                expires_ns: Some(p.spec.window_end_ns()),
            });
            self.timers.insert(id, TimerRole::Publish(i));
        }
        if self.settings.reliability == Reliability::Reliable {
            let interval = self.settings.repair_interval_ns.max(1);
            if !self.publishers.is_empty() {
                let id = exec.add_timer(TimerSpec::periodic(start_ns + interval, interval));
                self.timers.insert(id, TimerRole::Heartbeat);
            }
            if !self.subscriptions.is_empty() {
                let id = exec.add_timer(TimerSpec::periodic(start_ns + interval, interval));
                self.timers.insert(id, TimerRole::Repair);
            }
        }
    }

    /// Publishes the next message of publisher `index`, scheduled at `scheduled_ns`.
    pub fn publish<C: Clock>(
        &mut self,
        index: usize,
        scheduled_ns: u64,
        clock: &mut C,
    ) -> PublishOutcome {
        let Node {
            id,
            settings,
            endpoint,
            publishers,
            tracer,
            stats,
            errors,
            ..
        } = self;
        let p = &mut publishers[index];
        let topic = p.spec.topic_id;
        let seq = p.next_seq;
        p.next_seq += 1;

        let app_ts = clock.now_ns();
        tracer.record(topic, seq, Stage::AppPublish, app_ts);
        clock.charge(Work::ClientPublish);
        tracer.record(topic, seq, Stage::ClientPublish, clock.now_ns());
        clock.charge(Work::AdapterPublish);
        tracer.record(topic, seq, Stage::AdapterPublish, clock.now_ns());
        clock.charge(Work::SerializeSetup);
        tracer.record(topic, seq, Stage::SerializeBegin, clock.now_ns());
        let header = MessageHeader {
            seq,
            publish_ts_ns: app_ts,
        };
        let serialized = Bytes::from(serialize(header, p.stamp(seq)));
        clock.charge(Work::Serialize {
            bytes: serialized.len(),
        });
        tracer.record(topic, seq, Stage::SerializeEnd, clock.now_ns());
        clock.charge(Work::Handoff);
        tracer.record(topic, seq, Stage::WireSend, clock.now_ns());

        let frags = fragment_count(
            serialized.len() - MESSAGE_HEADER_LEN,
            settings.fragment_limit,
        );
        let sent = Sent {
            seq,
            publish_ts_ns: app_ts,
            serialized,
        };
        let rotate = seq as usize;
        let datagrams_sent = transmit(
            *id,
            topic,
            &sent,
            settings.fragment_limit,
            None,
            &p.spec.subscribers,
            rotate,
            endpoint,
            clock,
            stats,
            errors,
        );

        p.last_sent = Some((seq, frags as u16));
        if settings.reliability == Reliability::Reliable {
            p.remember(sent);
        }
        let status = if app_ts <= scheduled_ns + p.spec.period_ns {
            SendStatus::SentInTime
        } else {
            SendStatus::SentLate
        };
        p.records.push(PublisherRecord {
            run_id: settings.run_id.clone(),
            topic_id: topic,
            publisher_node: *id,
            seq,
            scheduled_ns,
            publish_ts_ns: Some(app_ts),
            status,
        });
        PublishOutcome {
            seq,
            publish_ts_ns: app_ts,
            fragment_count: frags,
            datagrams_sent,
        }
    }

    fn heartbeat<C: Clock>(&mut self, clock: &mut C) {
        for p in &self.publishers {
            let Some((last_seq, frag_count)) = p.last_sent else {
                continue;
            };
            let packet = WirePacket {
                packet_type: PacketType::Heartbeat,
                topic_id: p.spec.topic_id,
                publisher_id: self.id,
                seq: last_seq,
                frag_index: 0,
                frag_count,
                publish_ts_ns: 0,
                payload: Bytes::new(),
            };
            let datagram = packet.encode().expect("heartbeat fits");
            for &dest in &p.spec.subscribers {
                clock.charge(Work::Send {
                    bytes: datagram.len(),
                });
                match self.endpoint.send(dest, &datagram, clock.now_ns()) {
                    Ok(()) => self.stats.heartbeats_sent += 1,
                    Err(e) => {
                        self.stats.send_errors += 1;
                        note(&mut self.errors, &e);
                    }
                }
            }
        }
    }

    fn repair<C: Clock>(&mut self, clock: &mut C) {
        let nacks = self.reassembly.repair_round(clock.now_ns());
        for nack in nacks {
            let datagram = nack.to_packet().encode().expect("nack fits");
            clock.charge(Work::Send {
                bytes: datagram.len(),
            });
            match self
                .endpoint
                .send(nack.publisher_id, &datagram, clock.now_ns())
            {
                Ok(()) => self.stats.nacks_sent += 1,
                Err(e) => {
                    self.stats.send_errors += 1;
                    note(&mut self.errors, &e);
                }
            }
        }
        self.stats.abandoned += self.reassembly.take_abandoned().len() as u64;
    }

    fn handle<C: Clock>(&mut self, inbound: Inbound, clock: &mut C) {
        let packet = match WirePacket::decode(&inbound.datagram) {
            Ok(p) => p,
            Err(e) => {
                self.stats.malformed += 1;
                note(&mut self.errors, &e);
                return;
            }
        };
        match packet.packet_type {
            PacketType::Data => self.on_data(&packet, clock),
            PacketType::Heartbeat => {
                if self
                    .subscribed(packet.topic_id, packet.publisher_id)
                    .is_some()
                {
                    let key = StreamKey {
                        topic_id: packet.topic_id,
                        publisher_id: packet.publisher_id,
                    };
                    self.reassembly.note_heartbeat(
                        key,
                        packet.seq,
                        packet.frag_count,
                        clock.now_ns(),
                    );
                }
            }
            PacketType::Nack => {
                if let Some(nack) = NackRecord::from_packet(&packet) {
                    self.on_nack(&nack, inbound.source, clock);
                }
            }
        }
    }

    fn subscribed(&self, topic: TopicId, publisher: NodeId) -> Option<usize> {
        self.subscriptions
            .iter()
            .position(|s| s.spec.topic_id == topic && s.spec.publisher_node == publisher)
    }

    fn on_data<C: Clock>(&mut self, packet: &WirePacket, clock: &mut C) {
        let Some(index) = self.subscribed(packet.topic_id, packet.publisher_id) else {
            return;
        };
        let msg = match self.reassembly.feed(packet, clock.now_ns()) {
            Ok(FeedOutcome::Complete(msg)) => msg,
            Ok(_) => {
                self.stats.abandoned += self.reassembly.take_abandoned().len() as u64;
                return;
            }
            Err(e) => {
                self.stats.malformed += 1;
                note(&mut self.errors, &e);
                return;
            }
        };
        self.deliver(index, msg, clock);
    }

    fn deliver<C: Clock>(&mut self, index: usize, msg: CompletedMessage, clock: &mut C) {
        let topic = msg.topic_id;
        let seq = msg.seq;
        let tracer = &mut self.tracer;
        tracer.record(topic, seq, Stage::WireRecvComplete, clock.now_ns());
        clock.charge(Work::AdapterDeliver);
        tracer.record(topic, seq, Stage::AdapterDeliver, clock.now_ns());
        clock.charge(Work::ClientDeliver);
        tracer.record(topic, seq, Stage::ClientDeliver, clock.now_ns());
        clock.charge(Work::Dispatch);
        let receive_ts = clock.now_ns();
        tracer.record(topic, seq, Stage::CallbackBegin, receive_ts);
        let sub = &mut self.subscriptions[index];
        if let Some(cb) = sub.callback.as_mut() {
            cb(&msg);
        }
        clock.charge(Work::Callback);
        tracer.record(topic, seq, Stage::CallbackEnd, clock.now_ns());

        let latency = receive_ts.saturating_sub(msg.publish_ts_ns);
        self.samples.push(SampleRecord {
            run_id: self.settings.run_id.clone(),
            topic_id: topic,
            publisher_node: msg.publisher_id,
            subscriber_node: self.id,
            seq,
            publish_ts_ns: msg.publish_ts_ns,
            receive_ts_ns: Some(receive_ts),
            latency_ns: Some(latency),
            status: DeliveryStatus::classify(latency, sub.spec.period_ns),
        });
    }

    fn on_nack<C: Clock>(&mut self, nack: &NackRecord, source: NodeId, clock: &mut C) {
        self.stats.nacks_received += 1;
        if nack.publisher_id != self.id {
            return;
        }
        let Node {
            id,
            settings,
            endpoint,
            publishers,
            stats,
            errors,
            ..
        } = self;
        let Some(p) = publishers.iter().find(|p| p.spec.topic_id == nack.topic_id) else {
            return;
        };
        let Some(sent) = p.history.iter().find(|s| s.seq == nack.seq) else {
            stats.unrepairable += 1;
            return;
        };
        let frags = fragment_count(
            sent.serialized.len() - MESSAGE_HEADER_LEN,
            settings.fragment_limit,
        ) as u16;
        let missing = nack.missing_indices(frags);
        let resent = transmit(
            *id,
            nack.topic_id,
            sent,
            settings.fragment_limit,
            Some(&missing),
            &[source],
            0,
            endpoint,
            clock,
            stats,
            errors,
        );
        stats.fragments_resent += resent as u64;
    }

    /// Consumes the node; unexecuted publish ticks become UNSENT records.
    pub fn finish(self) -> NodeOutput {
        let run_id = self.settings.run_id.clone();
        let id = self.id;
        let publisher_records = self
            .publishers
            .into_iter()
            .flat_map(|p| p.finish(&run_id, id))
            .collect();
        NodeOutput {
            node_id: id,
            traces: self.tracer.into_events(),
            samples: self.samples,
            publisher_records,
            stats: self.stats,
            errors: self.errors,
        }
    }
}

/// Sends the selected fragments of `sent` to every destination, fragment by
/// fragment, starting each round at `dests[rotate % len]`. Returns the number
/// of datagrams accepted by the channel.
#[allow(clippy::too_many_arguments)]
fn transmit<C: Clock, E: Endpoint>(
    node: NodeId,
    topic: TopicId,
    sent: &Sent,
    fragment_limit: usize,
    only: Option<&[u16]>,
    dests: &[NodeId],
    rotate: usize,
    endpoint: &mut E,
    clock: &mut C,
    stats: &mut NodeStats,
    errors: &mut Vec<String>,
) -> usize {
    if dests.is_empty() {
        return 0;
    }
    let body = sent.serialized.slice(MESSAGE_HEADER_LEN..);
    let frag_count = fragment_count(body.len(), fragment_limit) as u16;
    let mut accepted = 0;
    for (i, range) in fragment_ranges(body.len(), fragment_limit).enumerate() {
        let i = i as u16;
        if only.is_some_and(|o| !o.contains(&i)) {
            continue;
        }
        let packet = WirePacket {
            packet_type: PacketType::Data,
            topic_id: topic,
            publisher_id: node,
            seq: sent.seq,
            frag_index: i,
            frag_count,
            publish_ts_ns: sent.publish_ts_ns,
            payload: body.slice(range),
        };
        let datagram = match packet.encode() {
            Ok(d) => d,
            Err(e) => {
                stats.send_errors += 1;
                note(errors, &e);
                continue;
            }
        };
        for k in 0..dests.len() {
            let dest = dests[(k + rotate) % dests.len()];
            clock.charge(Work::Send {
                bytes: datagram.len(),
            });
            match endpoint.send(dest, &datagram, clock.now_ns()) {
                Ok(()) => accepted += 1,
                Err(e) => {
                    stats.send_errors += 1;
                    note(errors, &e);
                }
            }
        }
    }
    accepted
}

fn note(errors: &mut Vec<String>, e: &dyn std::fmt::Display) {
    if errors.len() < MAX_ERROR_MESSAGES {
        errors.push(e.to_string());
    }
}

impl<C: Clock, E: Endpoint> Handler<C> for Node<E> {
    fn on_timer(&mut self, timer: TimerId, deadline_ns: u64, clock: &mut C) {
        match self.timers.get(&timer).copied() {
            Some(TimerRole::Publish(i)) => {
                self.publish(i, deadline_ns, clock);
            }
            Some(TimerRole::Heartbeat) => self.heartbeat(clock),
            Some(TimerRole::Repair) => self.repair(clock),
            None => {}
        }
    }

    fn on_inbound(&mut self, clock: &mut C) -> bool {
        match self.endpoint.try_recv(clock.now_ns()) {
            Ok(Some(inbound)) => {
                self.stats.datagrams_received += 1;
                clock.charge(Work::Recv {
                    bytes: inbound.datagram.len(),
                });
                self.handle(inbound, clock);
                true
            }
            Ok(None) => false,
            Err(e) => {
                self.stats.recv_errors += 1;
                note(&mut self.errors, &e);
                false
            }
        }
    }

    fn next_inbound_ns(&self) -> Option<u64> {
        self.endpoint.next_arrival_ns()
    }

    fn wait_inbound(&mut self, timeout: Duration) {
        if let Err(e) = self.endpoint.wait(timeout) {
            self.stats.recv_errors += 1;
            note(&mut self.errors, &e);
            std::thread::sleep(timeout);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stack::clock::{CostModel, MonotonicClock, VirtualClock};
    use crate::transport::{SimChannelConfig, SimEndpoint, SimNetwork, SimStats};
    use std::sync::Mutex;

    fn settings(reliability: Reliability, limit: usize) -> NodeSettings {
        NodeSettings {
            run_id: Arc::from("t"),
            reliability,
            fragment_limit: limit,
            repair_interval_ns: 5_000_000,
            max_repair_rounds: 10,
        }
    }

    fn network(n: usize, loss: f64) -> Arc<Mutex<SimNetwork>> {
        SimNetwork::shared(
            n,
            SimChannelConfig {
                loss_prob: loss,
                delay_ns: 0,
                seed: 3,
            },
        )
    }

    fn pub_spec(subscribers: Vec<NodeId>, payload_bytes: usize) -> PublisherSpec {
        PublisherSpec {
            topic_id: 0,
            subscribers,
            payload_bytes,
            period_ns: 10_000_000,
            first_deadline_ns: 0,
            message_count: 100,
            payload_seed: 1,
        }
    }

    fn sim_stats(net: &Arc<Mutex<SimNetwork>>) -> SimStats {
        net.lock().unwrap().stats().clone()
    }

    #[test]
    fn first_publish_stamps_six_ordered_events() {
        let net = network(2, 0.0);
        let mut node = Node::new(
            settings(Reliability::Reliable, 65_536),
            SimEndpoint::new(0, net),
        );
        let i = node.add_publisher(pub_spec(vec![1], 16));
        let mut clock = VirtualClock::new(0, CostModel::default());
        let out = node.publish(i, 0, &mut clock);
        assert_eq!(out.seq, 0);
        let ev = node.traces();
        assert_eq!(ev.len(), 6);
        assert_eq!(
            ev.iter().map(|e| e.stage).collect::<Vec<_>>(),
            Stage::PUBLISHER.to_vec()
        );
        assert!(ev.iter().all(|e| e.seq == 0 && e.node_id == 0));
        assert!(ev.windows(2).all(|w| w[0].ts_ns <= w[1].ts_ns));
        assert_eq!(ev[0].ts_ns, out.publish_ts_ns);
    }

    #[test]
    fn one_mebibyte_is_sixteen_datagrams() {
        let net = network(2, 0.0);
        let mut node = Node::new(
            settings(Reliability::BestEffort, 65_536),
            SimEndpoint::new(0, net.clone()),
        );
        let i = node.add_publisher(pub_spec(vec![1], 1_048_576));
        let mut clock = VirtualClock::new(0, CostModel::default());
        let out = node.publish(i, 0, &mut clock);
        assert_eq!(out.fragment_count, 16);
        assert_eq!(out.datagrams_sent, 16);
        assert_eq!(sim_stats(&net).data_sent(), 16);
    }

    #[test]
    fn sink_holds_one_subscription_per_publisher() {
        let net = network(32, 0.0);
        let mut sink = Node::new(
            settings(Reliability::Reliable, 65_536),
            SimEndpoint::new(31, net),
        );
        for p in 0..31u16 {
            sink.add_subscription(
                SubscriptionSpec {
                    topic_id: p,
                    publisher_node: p,
                    period_ns: 10_000_000,
                },
                None,
            );
        }
        assert_eq!(sink.subscription_count(), 31);
    }

    fn run_pair(
        loss: f64,
        reliability: Reliability,
        payload: usize,
    ) -> (NodeOutput, NodeOutput, SimStats) {
        let net = network(2, loss);
        let mut publisher = Node::new(
            settings(reliability, 65_536),
            SimEndpoint::new(0, net.clone()),
        );
        publisher.add_publisher(pub_spec(vec![1], payload));
        let mut subscriber = Node::new(
            settings(reliability, 65_536),
            SimEndpoint::new(1, net.clone()),
        );
        subscriber.add_subscription(
            SubscriptionSpec {
                topic_id: 0,
                publisher_node: 0,
                period_ns: 10_000_000,
            },
            None,
        );
        let mut ea = Executor::new(VirtualClock::new(0, CostModel::default()));
        let mut eb = Executor::new(VirtualClock::new(0, CostModel::default()));
        publisher.attach(&mut ea, 0);
        subscriber.attach(&mut eb, 0);
        // lockstep in 1 ms slices; the delay-free channel tolerates the skew
        let end = 1_200_000_000u64;
        let mut t = 0;
        while t < end {
            t += 1_000_000;
            ea.spin(&mut publisher, t);
            eb.spin(&mut subscriber, t);
        }
        let stats = sim_stats(&net);
        (publisher.finish(), subscriber.finish(), stats)
    }

    #[test]
    fn clean_channel_delivers_everything_in_time() {
        let (p, s, _) = run_pair(0.0, Reliability::BestEffort, 1_000);
        assert_eq!(p.publisher_records.len(), 100);
        assert!(p
            .publisher_records
            .iter()
            .all(|r| r.status == SendStatus::SentInTime));
        assert_eq!(s.samples.len(), 100);
        assert!(s.samples.iter().all(|r| r.status == DeliveryStatus::InTime));
        let seqs: Vec<u32> = s.samples.iter().map(|r| r.seq).collect();
        assert_eq!(seqs, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn reliable_repairs_lossy_channel() {
        let (_, s, stats) = run_pair(0.2, Reliability::Reliable, 200_000);
        assert!(stats.data_dropped() > 0);
        assert_eq!(s.samples.len(), 100, "every message repaired");
        assert!(s.stats.nacks_sent > 0);
    }

    #[test]
    fn best_effort_loses_under_loss() {
        let (_, s, _) = run_pair(0.2, Reliability::BestEffort, 200_000);
        assert!(s.samples.len() < 100);
        assert!(s.stats.nacks_sent == 0);
    }

    #[test]
    fn delivered_payload_matches_published_bytes() {
        let net = network(2, 0.0);
        let mut publisher = Node::new(
            settings(Reliability::BestEffort, 1_000),
            SimEndpoint::new(0, net.clone()),
        );
        let i = publisher.add_publisher(pub_spec(vec![1], 5_000));
        let got = Arc::new(Mutex::new(Vec::new()));
        let sink = got.clone();
        let mut subscriber = Node::new(
            settings(Reliability::BestEffort, 1_000),
            SimEndpoint::new(1, net),
        );
        subscriber.add_subscription(
            SubscriptionSpec {
                topic_id: 0,
                publisher_node: 0,
                period_ns: 10_000_000,
            },
            Some(Box::new(move |m: &CompletedMessage| {
                sink.lock().unwrap().push(m.to_vec())
            })),
        );
        let mut clock = VirtualClock::new(0, CostModel::default());
        publisher.publish(i, 0, &mut clock);
        let mut expected = publisher.publishers[0].payload.clone();
        expected[..4].copy_from_slice(&0u32.to_le_bytes());
        let mut sub_clock = VirtualClock::new(clock.now_ns(), CostModel::default());
        while Handler::<VirtualClock>::on_inbound(&mut subscriber, &mut sub_clock) {}
        assert_eq!(*got.lock().unwrap(), vec![expected]);
    }

    #[test]
    fn serialize_span_grows_with_payload_on_real_clock() {
        fn median_span(payload: usize) -> u64 {
            let net = network(2, 0.0);
            let mut node = Node::new(
                settings(Reliability::BestEffort, 65_536),
                SimEndpoint::new(0, net),
            );
            let i = node.add_publisher(pub_spec(vec![], payload));
            let mut clock = MonotonicClock::new();
            let mut spans: Vec<u64> = (0..100)
                .map(|_| {
                    node.publish(i, 0, &mut clock);
                    let ev = node.traces();
                    let n = ev.len();
                    ev[n - 2].ts_ns - ev[n - 3].ts_ns
                })
                .collect();
            spans.sort_unstable();
            spans[50]
        }
        assert!(median_span(2_097_152) > median_span(0));
    }
}
