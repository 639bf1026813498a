//! Deterministic simulated channel.
//!
//! Every datagram handed to the network consumes exactly one draw from a
//! seeded ChaCha stream, in global send order; it is dropped iff the draw is
//! below `loss_prob`. Survivors arrive `delay_ns` after their send instant.
//! Given the same seed and the same send order, outcomes are identical.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::{Arc, Mutex, MutexGuard};

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wire::{peek_type, PacketType, HEADER_LEN};
use super::{Endpoint, Inbound, TransportError};
use crate::model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimChannelConfig {
    pub loss_prob: f64,
    pub delay_ns: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferOutcome {
    Delivered { at_ns: u64 },
    Dropped,
}

/// Counters per packet type, indexed by `PacketType as usize`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimStats {
    pub sent: [u64; 3],
    pub dropped: [u64; 3],
    /// DATA datagrams sent per (topic, publisher, seq), resends included.
    pub data_per_message: BTreeMap<(u16, u16, u32), u32>,
}

impl SimStats {
    pub fn data_sent(&self) -> u64 {
        self.sent[PacketType::Data as usize]
    }

    pub fn data_dropped(&self) -> u64 {
        self.dropped[PacketType::Data as usize]
    }
}

#[derive(Debug)]
struct Arrival {
    at_ns: u64,
    order: u64,
    source: NodeId,
    datagram: Bytes,
}

impl PartialEq for Arrival {
    fn eq(&self, other: &Self) -> bool {
        (self.at_ns, self.order) == (other.at_ns, other.order)
    }
}
impl Eq for Arrival {}
impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Arrival {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_ns, self.order).cmp(&(other.at_ns, other.order))
    }
}

#[derive(Debug)]
pub struct SimNetwork {
    config: SimChannelConfig,
    rng: ChaCha8Rng,
    inboxes: Vec<BinaryHeap<Reverse<Arrival>>>,
    order: u64,
    stats: SimStats,
    touched: Vec<bool>,
}

impl SimNetwork {
    pub fn new(node_count: usize, config: SimChannelConfig) -> Self {
        SimNetwork {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            inboxes: (0..node_count).map(|_| BinaryHeap::new()).collect(),
            order: 0,
            stats: SimStats::default(),
            touched: vec![false; node_count],
        }
    }

    pub fn shared(node_count: usize, config: SimChannelConfig) -> Arc<Mutex<SimNetwork>> {
        Arc::new(Mutex::new(SimNetwork::new(node_count, config)))
    }

    /// Decides the fate of the next datagram in global send order.
    pub fn sim_transfer(&mut self, send_ns: u64) -> TransferOutcome {
        let draw: f64 = self.rng.gen();
        if draw < self.config.loss_prob {
            TransferOutcome::Dropped
        } else {
            TransferOutcome::Delivered {
                at_ns: send_ns + self.config.delay_ns,
            }
        }
    }

    pub fn send(
        &mut self,
        source: NodeId,
        dest: NodeId,
        datagram: Bytes,
        send_ns: u64,
    ) -> Result<TransferOutcome, TransportError> {
        if dest as usize >= self.inboxes.len() {
            return Err(TransportError::UnknownPeer(dest));
        }
        let kind = peek_type(&datagram).map(|t| t as usize);
        if let Some(k) = kind {
            self.stats.sent[k] += 1;
            if k == PacketType::Data as usize {
                let h = &datagram[..HEADER_LEN];
                let key = (
                    u16::from_le_bytes([h[5], h[6]]),
                    u16::from_le_bytes([h[7], h[8]]),
                    u32::from_le_bytes(h[9..13].try_into().unwrap()),
                );
                *self.stats.data_per_message.entry(key).or_default() += 1;
            }
        }
        let outcome = self.sim_transfer(send_ns);
        match outcome {
            TransferOutcome::Dropped => {
                if let Some(k) = kind {
                    self.stats.dropped[k] += 1;
                }
            }
            TransferOutcome::Delivered { at_ns } => {
                self.order += 1;
                self.inboxes[dest as usize].push(Reverse(Arrival {
                    at_ns,
                    order: self.order,
                    source,
                    datagram,
                }));
                self.touched[dest as usize] = true;
            }
        }
        Ok(outcome)
    }

    pub fn next_arrival_ns(&self, node: NodeId) -> Option<u64> {
        self.inboxes
            .get(node as usize)
            .and_then(|h| h.peek())
            .map(|Reverse(a)| a.at_ns)
    }

    /// Pops the earliest datagram for `node` that has arrived by `now_ns`.
    pub fn pop_ready(&mut self, node: NodeId, now_ns: u64) -> Option<Inbound> {
        let inbox = self.inboxes.get_mut(node as usize)?;
        if inbox.peek()?.0.at_ns > now_ns {
            return None;
        }
        let Reverse(a) = inbox.pop()?;
        Some(Inbound {
            source: a.source,
            datagram: a.datagram,
        })
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    /// Nodes that received a datagram since the last call.
    pub fn take_touched(&mut self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for (i, t) in self.touched.iter_mut().enumerate() {
            if std::mem::take(t) {
                out.push(i as NodeId);
            }
        }
        out
    }
}

/// One node's handle on a shared [`SimNetwork`].
#[derive(Debug, Clone)]
pub struct SimEndpoint {
    node: NodeId,
    net: Arc<Mutex<SimNetwork>>,
}

impl SimEndpoint {
    pub fn new(node: NodeId, net: Arc<Mutex<SimNetwork>>) -> Self {
        SimEndpoint { node, net }
    }

    fn net(&self) -> MutexGuard<'_, SimNetwork> {
        self.net.lock().expect("sim network poisoned")
    }
}

impl Endpoint for SimEndpoint {
    fn node_id(&self) -> NodeId {
        self.node
    }

    fn send(&mut self, dest: NodeId, datagram: &Bytes, now_ns: u64) -> Result<(), TransportError> {
        let node = self.node;
        self.net()
            .send(node, dest, datagram.clone(), now_ns)
            .map(|_| ())
    }

    fn try_recv(&mut self, now_ns: u64) -> Result<Option<Inbound>, TransportError> {
        let node = self.node;
        Ok(self.net().pop_ready(node, now_ns))
    }

    fn next_arrival_ns(&self) -> Option<u64> {
        self.net().next_arrival_ns(self.node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(loss_prob: f64, seed: u64) -> SimNetwork {
        SimNetwork::new(
            2,
            SimChannelConfig {
                loss_prob,
                delay_ns: 7,
                seed,
            },
        )
    }

    #[test]
    fn boundaries() {
        let mut never = net(0.0, 1);
        let mut always = net(1.0, 1);
        for i in 0..1000 {
            assert_eq!(
                never.sim_transfer(i),
                TransferOutcome::Delivered { at_ns: i + 7 }
            );
            assert_eq!(always.sim_transfer(i), TransferOutcome::Dropped);
        }
    }

    #[test]
    fn drop_fraction_matches_probability() {
        let mut n = net(0.1, 42);
        let dropped = (0..100_000)
            .filter(|_| n.sim_transfer(0) == TransferOutcome::Dropped)
            .count();
        let fraction = dropped as f64 / 100_000.0;
        assert!((fraction - 0.1).abs() <= 0.01, "{fraction}");
    }

    #[test]
    fn same_seed_same_outcomes() {
        let run = |seed| {
            let mut n = net(0.3, seed);
            (0..500).map(|i| n.sim_transfer(i)).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn arrivals_pop_in_time_order() {
        let mut n = net(0.0, 0);
        n.send(0, 1, Bytes::from_static(b"late"), 100).unwrap();
        n.send(0, 1, Bytes::from_static(b"early"), 10).unwrap();
        assert_eq!(n.next_arrival_ns(1), Some(17));
        assert!(n.pop_ready(1, 16).is_none());
        assert_eq!(
            n.pop_ready(1, 17).unwrap().datagram,
            Bytes::from_static(b"early")
        );
        assert_eq!(
            n.pop_ready(1, 1000).unwrap().datagram,
            Bytes::from_static(b"late")
        );
        assert_eq!(n.take_touched(), vec![1]);
        assert!(n.send(0, 5, Bytes::new(), 0).is_err());
    }
}
