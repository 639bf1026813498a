//! Time sources for node execution.
//!
//! Stack code stamps trace events with [`Clock::now_ns`] and reports the work
//! it performs through [`Clock::charge`]. On the monotonic clock the work
//! simply takes real time and `charge` does nothing; on the virtual clock
//! `charge` advances time by the [`CostModel`].

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crate::model::BenchmarkConfig;

/// A unit of work whose duration the virtual clock models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Work {
    ClientPublish,
    AdapterPublish,
    SerializeSetup,
    Serialize {
        bytes: usize,
    },
    Handoff,
    Send {
        bytes: usize,
    },
    Recv {
        bytes: usize,
    },
    AdapterDeliver,
    ClientDeliver,
    Dispatch,
    Callback,
    /// Explicit duration. The monotonic clock sleeps for it.
    Fixed(u64),
}

pub trait Clock {
    fn now_ns(&self) -> u64;
    fn charge(&mut self, work: Work);
    /// Moves a virtual clock forward to `t_ns`; real clocks ignore it.
    fn advance_to(&mut self, t_ns: u64);
    fn is_virtual(&self) -> bool;
}

fn epoch() -> Instant {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    *EPOCH.get_or_init(Instant::now)
}

/// Process-wide monotonic clock shared by every node of a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct MonotonicClock;

impl MonotonicClock {
    pub fn new() -> Self {
        epoch();
        MonotonicClock
    }
}

impl Clock for MonotonicClock {
    fn now_ns(&self) -> u64 {
        epoch().elapsed().as_nanos() as u64
    }

    fn charge(&mut self, work: Work) {
        if let Work::Fixed(ns) = work {
            std::thread::sleep(Duration::from_nanos(ns));
        }
    }

    fn advance_to(&mut self, _t_ns: u64) {}

    fn is_virtual(&self) -> bool {
        false
    }
}

/// Modeled cost of each stack step on the virtual clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    pub client_publish_ns: u64,
    pub adapter_publish_ns: u64,
    pub serialize_setup_ns: u64,
    pub serialize_ps_per_byte: u64,
    pub handoff_ns: u64,
    pub send_base_ns: u64,
    pub send_ps_per_byte: u64,
    pub recv_base_ns: u64,
    pub recv_ps_per_byte: u64,
    pub adapter_deliver_ns: u64,
    pub client_deliver_ns: u64,
    pub dispatch_ns: u64,
    pub callback_ns: u64,
}

impl Default for CostModel {
    /// Loopback-scale figures: a few microseconds per layer, about 1 GB/s
    /// serialization and 5 GB/s per transmitted copy.
    fn default() -> Self {
        CostModel {
            client_publish_ns: 2_000,
            adapter_publish_ns: 1_000,
            serialize_setup_ns: 300,
            serialize_ps_per_byte: crate::model::config::DEFAULT_SERIALIZE_PS_PER_BYTE,
            handoff_ns: 500,
            send_base_ns: 2_000,
            send_ps_per_byte: crate::model::config::DEFAULT_SEND_PS_PER_BYTE,
            recv_base_ns: 1_000,
            recv_ps_per_byte: 100,
            adapter_deliver_ns: 500,
            client_deliver_ns: 1_000,
            dispatch_ns: 1_000,
            callback_ns: 500,
        }
    }
}

impl CostModel {
    pub fn from_config(config: &BenchmarkConfig) -> Self {
        CostModel {
            serialize_ps_per_byte: config.sim_serialize_ps_per_byte,
            send_ps_per_byte: config.sim_send_ps_per_byte,
            ..CostModel::default()
        }
    }

    /// Every step free; only explicit `Work::Fixed` costs advance time.
    pub fn zero() -> Self {
        CostModel {
            client_publish_ns: 0,
            adapter_publish_ns: 0,
            serialize_setup_ns: 0,
            serialize_ps_per_byte: 0,
            handoff_ns: 0,
            send_base_ns: 0,
            send_ps_per_byte: 0,
            recv_base_ns: 0,
            recv_ps_per_byte: 0,
            adapter_deliver_ns: 0,
            client_deliver_ns: 0,
            dispatch_ns: 0,
            callback_ns: 0,
        }
    }

    pub fn cost_ns(&self, work: Work) -> u64 {
        let per_byte = |ps: u64, bytes: usize| (ps * bytes as u64).div_ceil(1_000);
        match work {
            Work::ClientPublish => self.client_publish_ns,
            Work::AdapterPublish => self.adapter_publish_ns,
            Work::SerializeSetup => self.serialize_setup_ns,
            Work::Serialize { bytes } => per_byte(self.serialize_ps_per_byte, bytes),
            Work::Handoff => self.handoff_ns,
            Work::Send { bytes } => self.send_base_ns + per_byte(self.send_ps_per_byte, bytes),
            Work::Recv { bytes } => self.recv_base_ns + per_byte(self.recv_ps_per_byte, bytes),
            Work::AdapterDeliver => self.adapter_deliver_ns,
            Work::ClientDeliver => self.client_deliver_ns,
            Work::Dispatch => self.dispatch_ns,
            Work::Callback => self.callback_ns,
            Work::Fixed(ns) => ns,
        }
    }
}

/// Deterministic clock for the simulated backend.
#[derive(Debug, Clone)]
pub struct VirtualClock {
    now_ns: u64,
    costs: CostModel,
}

impl VirtualClock {
    pub fn new(start_ns: u64, costs: CostModel) -> Self {
        VirtualClock {
            now_ns: start_ns,
            costs,
        }
    }

    pub fn costs(&self) -> &CostModel {
        &self.costs
    }
}

impl Clock for VirtualClock {
    fn now_ns(&self) -> u64 {
        self.now_ns
    }

    fn charge(&mut self, work: Work) {
        self.now_ns += self.costs.cost_ns(work);
    }

    fn advance_to(&mut self, t_ns: u64) {
        self.now_ns = self.now_ns.max(t_ns);
    }

    fn is_virtual(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_charges_model() {
        let mut c = VirtualClock::new(10, CostModel::default());
        c.charge(Work::Serialize { bytes: 2_097_152 });
        assert_eq!(c.now_ns(), 10 + 2_097_152);
        c.advance_to(5);
        assert_eq!(c.now_ns(), 10 + 2_097_152);
        c.charge(Work::Send { bytes: 1000 });
        assert_eq!(c.now_ns(), 10 + 2_097_152 + 2_000 + 200);
    }

    #[test]
    fn monotonic_clock_moves_forward() {
        let c = MonotonicClock::new();
        let a = c.now_ns();
        let b = c.now_ns();
        assert!(b >= a);
    }
}
