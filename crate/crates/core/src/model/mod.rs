//! Domain types, configuration, parameter sweeps and topology construction.

pub mod config;
pub mod sweep;
pub mod topology;

pub use config::{
    check_constraints, expected_message_count, validate_config, validate_pairs, Backend,
    BenchmarkConfig, ConfigError, Reliability, TopologyKind,
};
pub use sweep::{expand_sweep, presets, SweepMatrix};
pub use topology::{build_topology, NodeId, NodeSpec, Role, TopicId, TopicSpec, TopologySpec};
