//! Thread-per-node driver for the UDP loopback backend.

use std::sync::Arc;

use std::sync::Barrier;
use std::thread;

use crate::model::{BenchmarkConfig, NodeId, TopologySpec};
use crate::stack::{Clock, Executor, MonotonicClock, NodeOutput};
use crate::transport::{udp::DEFAULT_SOCKET_BUFFER, UdpEndpoint};

use super::{build_node, starts_at_t0, PayloadVerifier, RunError, Schedule};

pub(super) fn run(
    config: &BenchmarkConfig,
    topology: &TopologySpec,
    verifier: Option<&Arc<PayloadVerifier>>,
) -> Result<Vec<NodeOutput>, RunError> {
    let n = config.node_count as usize;
    let mut endpoints = Vec::with_capacity(n);
    for id in 0..n as NodeId {
        let port = if config.udp_port_base == 0 {
            0
        } else {
            config
                .udp_port_base
                .checked_add(id)
                .ok_or(RunError::PortRange {
                    base: config.udp_port_base,
                    nodes: config.node_count,
                })?
        };
        let endpoint = UdpEndpoint::bind(id, port, DEFAULT_SOCKET_BUFFER).map_err(|source| {
            RunError::Bind {
                node: id,
                port,
                source,
            }
        })?;
        endpoints.push(endpoint);
    }
    let peers = endpoints
        .iter()
        .map(|e| e.local_addr())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| RunError::Bind {
            node: 0,
            port: 0,
            source,
        })?;
    for e in &mut endpoints {
        e.set_peers(peers.clone());
    }

    let clock = MonotonicClock::new();
    let schedule = Schedule::new(config, clock.now_ns());
    let nodes: Vec<_> = endpoints
        .into_iter()
        .map(|e| build_node(config, topology, e, schedule.t0_ns, verifier))
        .collect();

    // every node is set up before anyone runs; publisher-only nodes then
    // idle until t0 while subscribers are already receiving
    let barrier = Barrier::new(n);
    thread::scope(|scope| {
        let handles: Vec<_> = nodes
            .into_iter()
            .map(|mut node| {
                let barrier = &barrier;
                let start = if starts_at_t0(topology, node.id()) {
                    schedule.t0_ns
                } else {
                    clock.now_ns()
                };
                scope.spawn(move || {
                    let mut exec = Executor::new(MonotonicClock::new());
                    node.attach(&mut exec, start);
                    barrier.wait();
                    exec.spin(&mut node, schedule.end_ns);
                    node.finish()
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(i, h)| h.join().map_err(|_| RunError::NodePanicked(i as NodeId)))
            .collect()
    })
}
