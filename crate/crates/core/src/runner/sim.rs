//! Discrete-event driver for the simulated backend.

use std::sync::Arc;

use crate::model::{BenchmarkConfig, NodeId, TopologySpec};
use crate::stack::{Clock, CostModel, Executor, Node, NodeOutput, VirtualClock};
use crate::transport::{ChannelConfig, SimEndpoint, SimNetwork, SimStats};

use super::{build_node, starts_at_t0, PayloadVerifier, Schedule};

struct SimNode {
    node: Node<SimEndpoint>,
    exec: Executor<VirtualClock>,
    /// Instant of this node's next event; `None` while it has nothing pending.
    ready_ns: Option<u64>,
}

impl SimNode {
    fn refresh(&mut self) {
        self.ready_ns = self.exec.next_wakeup_ns(&self.node);
    }
}

pub(super) fn run(
    config: &BenchmarkConfig,
    topology: &TopologySpec,
    verifier: Option<&Arc<PayloadVerifier>>,
) -> (Vec<NodeOutput>, SimStats) {
    let n = config.node_count as usize;
    let net = SimNetwork::shared(n, ChannelConfig::from_config(config).sim());
    let costs = CostModel::from_config(config);
    let schedule = Schedule::new(config, 0);

    let mut nodes: Vec<SimNode> = (0..n as NodeId)
        .map(|id| {
            let start = if starts_at_t0(topology, id) {
                schedule.t0_ns
            } else {
                0
            };
            let endpoint = SimEndpoint::new(id, net.clone());
            let mut node = build_node(config, topology, endpoint, schedule.t0_ns, verifier);
            let mut exec = Executor::new(VirtualClock::new(start, costs));
            node.attach(&mut exec, start);
            let mut sim = SimNode {
                node,
                exec,
                ready_ns: None,
            };
            sim.refresh();
            sim
        })
        .collect();

    loop {
        let next = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.ready_ns.map(|t| (t, i)))
            .min();
        let Some((at, i)) = next else { break };
        if at >= schedule.end_ns {
            break;
        }
        let sim = &mut nodes[i];
        sim.exec.clock_mut().advance_to(at);
        sim.exec.step(&mut sim.node);
        sim.refresh();
        let touched = net.lock().expect("sim network poisoned").take_touched();
        for j in touched {
            nodes[j as usize].refresh();
        }
    }

    let stats = net.lock().expect("sim network poisoned").stats().clone();
    let outputs = nodes.into_iter().map(|s| s.node.finish()).collect();
    (outputs, stats)
}
