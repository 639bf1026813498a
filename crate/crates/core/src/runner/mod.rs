//! Run lifecycle: build the topology's nodes, start subscribers, release
//! publishers at a common t0 after the discovery wait, stop publishing at
//! t0 + duration, drain, then merge every node's records.
//!
//! The SIM backend is a discrete-event simulation: each node has its own
//! virtual clock and the driver always advances the node with the earliest
//! pending event (ties to the lowest node id), so a run is a pure function of
//! its config. The UDP backend runs one thread per node on the shared
//! monotonic clock over loopback sockets.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{
    build_topology, check_constraints, BenchmarkConfig, ConfigError, NodeId, TopologySpec,
};
use crate::stack::{
    base_payload, DeliveryStatus, Node, NodeOutput, NodeSettings, NodeStats, PublisherRecord,
    PublisherSpec, SampleRecord, SubscriptionSpec, TraceEvent,
};
use crate::transport::Endpoint;

mod sim;
pub mod sweep;
mod udp;

pub use sweep::{run_sweep, write_run, RunStatus, RunSummary, SweepError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("node {node}: cannot bind UDP port {port}: {source}")]
    Bind {
        node: NodeId,
        port: u16,
        source: std::io::Error,
    },
    #[error("UDP port base {base} leaves no room for {nodes} nodes")]
    PortRange { base: u16, nodes: u32 },
    #[error("node {0} panicked")]
    NodePanicked(NodeId),
}

/// Counters and error messages gathered from all nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunDiagnostics {
    pub nodes: NodeStats,
    pub errors: Vec<String>,
    /// DATA datagrams sent and dropped by the simulated channel.
    pub sim_data_sent: u64,
    pub sim_data_dropped: u64,
    /// Deliveries whose payload hash was checked, and how many differed;
    /// zero unless [`RunOptions::verify_payloads`] was set.
    pub payloads_verified: u64,
    pub payload_mismatches: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Hash every reassembled payload in the subscriber callback and compare
    /// it with the hash of the bytes its publisher generated.
    pub verify_payloads: bool,
}

/// Shared by all subscriber callbacks of a run with payload verification.
pub(crate) struct PayloadVerifier {
    bases: BTreeMap<u16, Vec<u8>>,
    verified: AtomicU64,
    mismatched: AtomicU64,
}

impl PayloadVerifier {
    fn new(config: &BenchmarkConfig, topology: &TopologySpec) -> Self {
        let bases = topology
            .topics
            .iter()
            .map(|t| {
                let seed = payload_seed(config, t.topic_id);
                (
                    t.topic_id,
                    base_payload(config.payload_bytes as usize, seed),
                )
            })
            .collect();
        PayloadVerifier {
            bases,
            verified: AtomicU64::new(0),
            mismatched: AtomicU64::new(0),
        }
    }

    fn check(&self, msg: &crate::transport::CompletedMessage) {
        let mut expected = Sha256::new();
        if let Some(base) = self.bases.get(&msg.topic_id) {
            let n = base.len().min(4);
            expected.update(&msg.seq.to_le_bytes()[..n]);
            expected.update(&base[n..]);
        }
        let mut actual = Sha256::new();
        for chunk in &msg.chunks {
            actual.update(chunk);
        }
        self.verified.fetch_add(1, Ordering::Relaxed);
        if expected.finalize() != actual.finalize() {
            self.mismatched.fetch_add(1, Ordering::Relaxed);
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: BenchmarkConfig,
    /// Sorted by (topic, seq, subscriber).
    pub samples: Vec<SampleRecord>,
    /// Sorted by (topic, seq).
    pub publisher_records: Vec<PublisherRecord>,
    /// Sorted by (topic, seq, node, stage, ts).
    pub traces: Vec<TraceEvent>,
    /// Wall-clock bounds of the run, nanoseconds since the Unix epoch.
    pub wall_start_ns: u64,
    pub wall_end_ns: u64,
    pub diagnostics: RunDiagnostics,
}

/// Instants of one run on the run's clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Schedule {
    pub t0_ns: u64,
    pub end_ns: u64,
}

impl Schedule {
    pub fn new(config: &BenchmarkConfig, start_ns: u64) -> Self {
        let t0_ns = start_ns + config.discovery_wait_ms * 1_000_000;
        let end_ns = t0_ns + config.duration.as_nanos() as u64 + config.drain_ms * 1_000_000;
        Schedule { t0_ns, end_ns }
    }
}

fn wall_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

/// Executes one benchmark run.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<RunArtifacts, RunError> {
    run_benchmark_with(config, RunOptions::default())
}

pub fn run_benchmark_with(
    config: &BenchmarkConfig,
    options: RunOptions,
) -> Result<RunArtifacts, RunError> {
    check_constraints(config)?;
    let topology = build_topology(config.node_count, config.topology_kind)?;
    let verifier = options
        .verify_payloads
        .then(|| Arc::new(PayloadVerifier::new(config, &topology)));
    let wall_start_ns = wall_ns();
    let (outputs, sim_stats) = match config.backend {
        crate::model::Backend::Sim => {
            let (outputs, stats) = sim::run(config, &topology, verifier.as_ref());
            (outputs, Some(stats))
        }
        crate::model::Backend::Udp => (udp::run(config, &topology, verifier.as_ref())?, None),
    };
    let wall_end_ns = wall_ns();
    let mut artifacts = merge(config, &topology, outputs);
    if let Some(stats) = sim_stats {
        artifacts.diagnostics.sim_data_sent = stats.data_sent();
        artifacts.diagnostics.sim_data_dropped = stats.data_dropped();
    }
    if let Some(v) = verifier {
        artifacts.diagnostics.payloads_verified = v.verified.load(Ordering::Relaxed);
        artifacts.diagnostics.payload_mismatches = v.mismatched.load(Ordering::Relaxed);
    }
    artifacts.wall_start_ns = wall_start_ns;
    artifacts.wall_end_ns = wall_end_ns;
    Ok(artifacts)
}

/// Offset of publisher `index`'s schedule from t0.
fn phase_offset(config: &BenchmarkConfig, index: usize) -> u64 {
    (index as u64).wrapping_mul(config.publisher_phase_ns) % config.period_ns()
}

fn payload_seed(config: &BenchmarkConfig, topic: u16) -> u64 {
    config.seed ^ ((topic as u64 + 1) << 32)
}

/// Whether `node` only publishes; such nodes start at t0, everyone else at run start.
pub(crate) fn starts_at_t0(topology: &TopologySpec, node: NodeId) -> bool {
    topology
        .topics
        .iter()
        .all(|t| !t.subscriber_nodes.contains(&node))
        && topology.topics.iter().any(|t| t.publisher_node == node)
}

/// Creates node `node` with its publishers and subscriptions.
pub(crate) fn build_node<E: Endpoint>(
    config: &BenchmarkConfig,
    topology: &TopologySpec,
    endpoint: E,
    t0_ns: u64,
    verifier: Option<&Arc<PayloadVerifier>>,
) -> Node<E> {
    let node_id = endpoint.node_id();
    let mut node = Node::new(NodeSettings::from_config(config), endpoint);
    let period_ns = config.period_ns();
    for (index, topic) in topology.topics.iter().enumerate() {
        if topic.publisher_node == node_id {
            node.add_publisher(PublisherSpec {
                topic_id: topic.topic_id,
                subscribers: topic.subscriber_nodes.clone(),
                payload_bytes: config.payload_bytes as usize,
                period_ns,
                first_deadline_ns: t0_ns + phase_offset(config, index),
                message_count: config.expected_message_count(),
                payload_seed: payload_seed(config, topic.topic_id),
            });
        }
        if topic.subscriber_nodes.contains(&node_id) {
            node.add_subscription(
                SubscriptionSpec {
                    topic_id: topic.topic_id,
                    publisher_node: topic.publisher_node,
                    period_ns,
                },
                verifier.map(|v| {
                    let v = Arc::clone(v);
                    Box::new(move |m: &crate::transport::CompletedMessage| v.check(m))
                        as crate::stack::MessageCallback
                }),
            );
        }
    }
    node
}

/// Combines node outputs, adds a LOST sample for every sent message a
/// subscriber never delivered, and sorts everything canonically.
pub fn merge(
    config: &BenchmarkConfig,
    topology: &TopologySpec,
    outputs: Vec<NodeOutput>,
) -> RunArtifacts {
    let mut samples = Vec::new();
    let mut publisher_records = Vec::new();
    let mut traces = Vec::new();
    let mut diagnostics = RunDiagnostics::default();
    for out in outputs {
        samples.extend(out.samples);
        publisher_records.extend(out.publisher_records);
        traces.extend(out.traces);
        diagnostics.nodes.absorb(&out.stats);
        diagnostics.errors.extend(
            out.errors
                .into_iter()
                .map(|e| format!("node {}: {e}", out.node_id)),
        );
    }

    let delivered: HashSet<(u16, NodeId, u32)> = samples
        .iter()
        .map(|s| (s.topic_id, s.subscriber_node, s.seq))
        .collect();
    let run_id: Arc<str> = Arc::from(config.run_id.as_str());
    let mut lost = Vec::new();
    for record in &publisher_records {
        let Some(publish_ts_ns) = record.publish_ts_ns else {
            continue;
        };
        let Some(topic) = topology.topic(record.topic_id) else {
            continue;
        };
        for &sub in &topic.subscriber_nodes {
            if !delivered.contains(&(record.topic_id, sub, record.seq)) {
                lost.push(SampleRecord {
                    run_id: run_id.clone(),
                    topic_id: record.topic_id,
                    publisher_node: record.publisher_node,
                    subscriber_node: sub,
                    seq: record.seq,
                    publish_ts_ns,
                    receive_ts_ns: None,
                    latency_ns: None,
                    status: DeliveryStatus::Lost,
                });
            }
        }
    }
    samples.extend(lost);

    samples.sort_by_key(|s| (s.topic_id, s.seq, s.subscriber_node));
    publisher_records.sort_by_key(|r| (r.topic_id, r.seq));
    traces.sort_by_key(|t| (t.topic_id, t.seq, t.node_id, t.stage, t.ts_ns));

    RunArtifacts {
        config: config.clone(),
        samples,
        publisher_records,
        traces,
        wall_start_ns: 0,
        wall_end_ns: 0,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_config, Backend, Reliability};
    use crate::stack::SendStatus;

    pub(crate) fn small(extra: &str) -> BenchmarkConfig {
        validate_config(&format!(
            "node_count = 2\ntopology_kind = PAIRED\npayload_bytes = 16\nfrequency_hz = 10\nduration_s = 6\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn lossless_small_run_accounts_exactly() {
        let art = run_benchmark(&small("")).unwrap();
        assert_eq!(art.publisher_records.len(), 60);
        assert!(art
            .publisher_records
            .iter()
            .all(|r| r.status == SendStatus::SentInTime));
        assert_eq!(art.samples.len(), 60);
        assert!(art
            .samples
            .iter()
            .all(|s| s.status == DeliveryStatus::InTime));
    }

    #[test]
    fn total_loss_marks_every_sent_message_lost() {
        let art = run_benchmark(&small("reliability = BEST_EFFORT\nloss_prob = 1")).unwrap();
        assert_eq!(art.publisher_records.len(), 60);
        assert!(art.publisher_records.iter().all(|r| r.status.is_sent()));
        assert_eq!(art.samples.len(), 60);
        assert!(art.samples.iter().all(|s| s.status == DeliveryStatus::Lost));
    }

    #[test]
    fn same_seed_same_artifacts() {
        let config = small("loss_prob = 0.1\nseed = 7");
        let a = run_benchmark(&config).unwrap();
        let b = run_benchmark(&config).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.publisher_records, b.publisher_records);
        assert_eq!(a.traces, b.traces);
    }

    #[test]
    fn verified_payloads_survive_fragmentation_and_repair() {
        let config = validate_config(
            "node_count = 4\ntopology_kind = ONE_TO_MANY\npayload_bytes = 100000\nfrequency_hz = 10\nduration_s = 6\nfragment_payload_bytes = 4096\nloss_prob = 0.05",
        )
        .unwrap();
        let art = run_benchmark_with(
            &config,
            RunOptions {
                verify_payloads: true,
            },
        )
        .unwrap();
        let delivered = art
            .samples
            .iter()
            .filter(|s| s.status != DeliveryStatus::Lost)
            .count() as u64;
        assert_eq!(delivered, 180);
        assert_eq!(art.diagnostics.payloads_verified, delivered);
        assert_eq!(art.diagnostics.payload_mismatches, 0);
        assert!(art.diagnostics.sim_data_dropped > 0);
    }

    #[test]
    fn no_publish_before_t0() {
        let config = small("publisher_phase_ns = 3000000");
        let art = run_benchmark(&config).unwrap();
        let t0 = config.discovery_wait_ms * 1_000_000;
        assert!(art
            .traces
            .iter()
            .filter(|t| t.stage == crate::stack::Stage::AppPublish)
            .all(|t| t.ts_ns >= t0));
        assert_eq!(config.backend, Backend::Sim);
        assert_eq!(config.reliability, Reliability::Reliable);
    }
}
