//! Wire framing, fragmentation/reassembly, and the two channel backends.
//!
//! A node talks to the network through an [`Endpoint`]. The simulated
//! endpoint lives on a virtual clock and reports when its next datagram
//! arrives; the UDP endpoint blocks in [`Endpoint::wait`] instead.

use std::io;
use std::time::Duration;

use bytes::Bytes;
use thiserror::Error;

use crate::model::{Backend, BenchmarkConfig, NodeId};

pub mod fragment;
pub mod reassembly;
pub mod sim;
pub mod udp;
pub mod wire;

pub use fragment::{fragment_count, fragment_payload, fragment_ranges};
pub use reassembly::{
    CompletedMessage, FeedOutcome, ReassemblyBuffer, ReassemblyError, ReassemblyPolicy, StreamKey,
};
pub use sim::{SimChannelConfig, SimEndpoint, SimNetwork, SimStats, TransferOutcome};
pub use udp::UdpEndpoint;
pub use wire::{NackRecord, PacketType, WireError, WirePacket, HEADER_LEN, MAGIC};

#[derive(Debug, Error)]
pub enum TransportError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Reassembly(#[from] ReassemblyError),
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
    #[error("no address for node {0}")]
    UnknownPeer(NodeId),
    #[error("datagram of {0} bytes exceeds the UDP limit")]
    DatagramTooLarge(usize),
}

/// A datagram received by a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inbound {
    pub source: NodeId,
    pub datagram: Bytes,
}

pub trait Endpoint {
    fn node_id(&self) -> NodeId;

    /// Hands one datagram to the channel. `now_ns` is the sender's clock at
    /// the send instant; only the simulated channel uses it.
    fn send(&mut self, dest: NodeId, datagram: &Bytes, now_ns: u64) -> Result<(), TransportError>;

    /// Returns a datagram that is available at `now_ns`, without blocking.
    fn try_recv(&mut self, now_ns: u64) -> Result<Option<Inbound>, TransportError>;

    /// Arrival instant of the next queued datagram, when the channel knows it.
    fn next_arrival_ns(&self) -> Option<u64> {
        None
    }

    /// Blocks for at most `timeout` until a datagram may be available.
    fn wait(&mut self, timeout: Duration) -> Result<(), TransportError> {
        std::thread::sleep(timeout);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub backend: Backend,
    pub loss_prob: f64,
    pub sim_delay_ns: u64,
    pub seed: u64,
    pub socket_buffer_bytes: usize,
}

impl ChannelConfig {
    pub fn from_config(config: &BenchmarkConfig) -> Self {
        ChannelConfig {
            backend: config.backend,
            loss_prob: config.loss_prob,
            sim_delay_ns: config.sim_delay_ns,
            seed: config.seed,
            socket_buffer_bytes: udp::DEFAULT_SOCKET_BUFFER,
        }
    }

    pub fn sim(&self) -> SimChannelConfig {
        SimChannelConfig {
            loss_prob: self.loss_prob,
            delay_ns: self.sim_delay_ns,
            seed: self.seed,
        }
    }
}
