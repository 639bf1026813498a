//! Benchmark configuration: the flat `key = value` document, its validation,
//! and the fully-defaulted [`BenchmarkConfig`].
//!
//! Document format: UTF-8, one `key = value` pair per line. Blank lines and
//! lines starting with `#` are ignored. Keys are the field names of
//! [`BenchmarkConfig`]; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use thiserror::Error;

/// Largest fragment payload that fits one UDP datagram next to the wire header.
pub const MAX_UDP_FRAGMENT_PAYLOAD: u32 = 65_000;
/// The simulated channel has no datagram limit; it admits a full 64 KiB slice.
pub const MAX_SIM_FRAGMENT_PAYLOAD: u32 = 65_536;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given more than once")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Constraint(String),
}

impl ConfigError {
    fn invalid(key: &str, value: &str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }
}

/// One of the three publisher/subscriber graph shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TopologyKind {
    /// As many publishers as subscribers, one topic per pair.
    Paired,
    /// One publisher node serving every other node on a single topic.
    OneToMany,
    /// Every other node publishes its own topic to a single subscriber node.
    ManyToOne,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 3] = [
        TopologyKind::Paired,
        TopologyKind::OneToMany,
        TopologyKind::ManyToOne,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Paired => "PAIRED",
            TopologyKind::OneToMany => "ONE_TO_MANY",
            TopologyKind::ManyToOne => "MANY_TO_ONE",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "PAIRED" => Ok(TopologyKind::Paired),
            "ONE_TO_MANY" => Ok(TopologyKind::OneToMany),
            "MANY_TO_ONE" => Ok(TopologyKind::ManyToOne),
            _ => Err("expected PAIRED, ONE_TO_MANY or MANY_TO_ONE".into()),
        }
    }
}

/// Channel backend carrying the wire packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Deterministic simulated channel on a virtual clock.
    Sim,
    /// Real UDP sockets on the loopback interface.
    Udp,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Sim => "SIM",
            Backend::Udp => "UDP",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SIM" => Ok(Backend::Sim),
            "UDP" => Ok(Backend::Udp),
            _ => Err("expected SIM or UDP".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reliability {
    BestEffort,
    Reliable,
}

impl Reliability {
    pub fn as_str(self) -> &'static str {
        match self {
            Reliability::BestEffort => "BEST_EFFORT",
            Reliability::Reliable => "RELIABLE",
        }
    }
}

impl fmt::Display for Reliability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Reliability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "BEST_EFFORT" => Ok(Reliability::BestEffort),
            "RELIABLE" => Ok(Reliability::Reliable),
            _ => Err("expected BEST_EFFORT or RELIABLE".into()),
        }
    }
}

/// One fully-resolved benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub run_id: String,
    pub node_count: u32,
    pub topology_kind: TopologyKind,
    pub payload_bytes: u32,
    /// Messages per second, per publisher.
    pub frequency_hz: u32,
    /// Measurement window; persisted as `duration_s` in decimal seconds.
    pub duration: Duration,
    pub backend: Backend,
    pub reliability: Reliability,
    pub fragment_payload_bytes: u32,
    pub seed: u64,
    pub discovery_wait_ms: u64,
    pub drain_ms: u64,
    /// Per-fragment drop probability (SIM only).
    pub loss_prob: f64,
    /// Per-fragment one-way delay (SIM only).
    pub sim_delay_ns: u64,
    pub max_repair_rounds: u32,
    pub repair_interval_ms: u64,
    /// Publisher `i` starts its schedule `i * publisher_phase_ns` (mod period) after t0.
    pub publisher_phase_ns: u64,
    /// Modeled serialization cost on the virtual clock, picoseconds per byte (SIM only).
    pub sim_serialize_ps_per_byte: u64,
    /// Modeled per-datagram transmit cost, picoseconds per byte (SIM only).
    pub sim_send_ps_per_byte: u64,
    /// First UDP port; node `i` binds `base + i`. Zero picks ephemeral ports (UDP only).
    pub udp_port_base: u16,
}

/// Every key accepted in a configuration document, in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "run_id",
    "node_count",
    "topology_kind",
    "payload_bytes",
    "frequency_hz",
    "duration_s",
    "backend",
    "reliability",
    "fragment_payload_bytes",
    "seed",
    "discovery_wait_ms",
    "drain_ms",
    "loss_prob",
    "sim_delay_ns",
    "max_repair_rounds",
    "repair_interval_ms",
    "publisher_phase_ns",
    "sim_serialize_ps_per_byte",
    "sim_send_ps_per_byte",
    "udp_port_base",
];

const SIM_ONLY_KEYS: &[&str] = &[
    "loss_prob",
    "sim_delay_ns",
    "sim_serialize_ps_per_byte",
    "sim_send_ps_per_byte",
];
const UDP_ONLY_KEYS: &[&str] = &["udp_port_base"];

pub const DEFAULT_SERIALIZE_PS_PER_BYTE: u64 = 1_000;
pub const DEFAULT_SEND_PS_PER_BYTE: u64 = 200;

impl BenchmarkConfig {
    /// Nanoseconds between two scheduled publishes.
    pub fn period_ns(&self) -> u64 {
        1_000_000_000 / u64::from(self.frequency_hz)
    }

    /// `floor(frequency_hz * duration_s)`: ticks scheduled per publisher.
    pub fn expected_message_count(&self) -> u64 {
        expected_message_count(self.frequency_hz, self.duration)
    }

    /// Renders the canonical document; `validate_config` of the result yields `self`.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.canonical_pairs() {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// Short stable digest of the canonical document.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_document().as_bytes());
        hex::encode(&digest[..8])
    }

    fn canonical_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs = vec![
            ("run_id", self.run_id.clone()),
            ("node_count", self.node_count.to_string()),
            ("topology_kind", self.topology_kind.to_string()),
            ("payload_bytes", self.payload_bytes.to_string()),
            ("frequency_hz", self.frequency_hz.to_string()),
            ("duration_s", format_seconds(self.duration)),
            ("backend", self.backend.to_string()),
            ("reliability", self.reliability.to_string()),
            (
                "fragment_payload_bytes",
                self.fragment_payload_bytes.to_string(),
            ),
            ("seed", self.seed.to_string()),
            ("discovery_wait_ms", self.discovery_wait_ms.to_string()),
            ("drain_ms", self.drain_ms.to_string()),
            ("max_repair_rounds", self.max_repair_rounds.to_string()),
            ("repair_interval_ms", self.repair_interval_ms.to_string()),
            ("publisher_phase_ns", self.publisher_phase_ns.to_string()),
        ];
        match self.backend {
            Backend::Sim => {
                pairs.push(("loss_prob", self.loss_prob.to_string()));
                pairs.push(("sim_delay_ns", self.sim_delay_ns.to_string()));
                pairs.push((
                    "sim_serialize_ps_per_byte",
                    self.sim_serialize_ps_per_byte.to_string(),
                ));
                pairs.push((
                    "sim_send_ps_per_byte",
                    self.sim_send_ps_per_byte.to_string(),
                ));
            }
            Backend::Udp => pairs.push(("udp_port_base", self.udp_port_base.to_string())),
        }
        pairs
    }
}

/// `floor(frequency_hz * duration)` computed exactly in nanoseconds.
pub fn expected_message_count(frequency_hz: u32, duration: Duration) -> u64 {
    let scaled = u128::from(frequency_hz) * duration.as_nanos();
    (scaled / 1_000_000_000) as u64
}

/// Parses a document into ordered key/value pairs, rejecting unknown and duplicate keys.
pub fn parse_document(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if pairs
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(ConfigError::DuplicateKey(key.to_string()));
        }
    }
    Ok(pairs)
}

/// Parses and validates a configuration document.
pub fn validate_config(text: &str) -> Result<BenchmarkConfig, ConfigError> {
    validate_pairs(&parse_document(text)?)
}

/// Validates already-split pairs and fills every default.
pub fn validate_pairs(pairs: &BTreeMap<String, String>) -> Result<BenchmarkConfig, ConfigError> {
    for key in pairs.keys() {
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key.clone()));
        }
    }
    let get = |key: &str| pairs.get(key).map(String::as_str);

    let node_count: u32 = required(get("node_count"), "node_count")?;
    let topology_kind: TopologyKind = required(get("topology_kind"), "topology_kind")?;
    let payload_bytes: u32 = required(get("payload_bytes"), "payload_bytes")?;
    let frequency_hz: u32 = required(get("frequency_hz"), "frequency_hz")?;
    let duration = match get("duration_s") {
        Some(v) => parse_seconds(v).map_err(|r| ConfigError::invalid("duration_s", v, r))?,
        None => return Err(ConfigError::MissingKey("duration_s")),
    };
    let backend: Backend = optional(get("backend"), "backend")?.unwrap_or(Backend::Sim);
    let reliability: Reliability =
        optional(get("reliability"), "reliability")?.unwrap_or(Reliability::Reliable);

    match backend {
        Backend::Udp => {
            if let Some(key) = SIM_ONLY_KEYS.iter().find(|k| pairs.contains_key(**k)) {
                return Err(ConfigError::Constraint(format!(
                    "loss injection is SIM-only (`{key}` not allowed with backend UDP)"
                )));
            }
        }
        Backend::Sim => {
            if let Some(key) = UDP_ONLY_KEYS.iter().find(|k| pairs.contains_key(**k)) {
                return Err(ConfigError::Constraint(format!(
                    "`{key}` applies to backend UDP only"
                )));
            }
        }
    }

    let loss_prob: f64 = optional(get("loss_prob"), "loss_prob")?.unwrap_or(0.0);
    let config = BenchmarkConfig {
        run_id: match get("run_id") {
            Some(v) => v.to_string(),
            None => default_run_id(node_count, topology_kind, payload_bytes, frequency_hz),
        },
        node_count,
        topology_kind,
        payload_bytes,
        frequency_hz,
        duration,
        backend,
        reliability,
        fragment_payload_bytes: optional(get("fragment_payload_bytes"), "fragment_payload_bytes")?
            .unwrap_or(MAX_UDP_FRAGMENT_PAYLOAD),
        seed: optional(get("seed"), "seed")?.unwrap_or(0),
        discovery_wait_ms: optional(get("discovery_wait_ms"), "discovery_wait_ms")?
            .unwrap_or(1_000),
        drain_ms: optional(get("drain_ms"), "drain_ms")?.unwrap_or(500),
        loss_prob,
        sim_delay_ns: optional(get("sim_delay_ns"), "sim_delay_ns")?.unwrap_or(0),
        max_repair_rounds: optional(get("max_repair_rounds"), "max_repair_rounds")?.unwrap_or(10),
        repair_interval_ms: optional(get("repair_interval_ms"), "repair_interval_ms")?.unwrap_or(5),
        publisher_phase_ns: optional(get("publisher_phase_ns"), "publisher_phase_ns")?.unwrap_or(0),
        sim_serialize_ps_per_byte: optional(
            get("sim_serialize_ps_per_byte"),
            "sim_serialize_ps_per_byte",
        )?
        .unwrap_or(DEFAULT_SERIALIZE_PS_PER_BYTE),
        sim_send_ps_per_byte: optional(get("sim_send_ps_per_byte"), "sim_send_ps_per_byte")?
            .unwrap_or(DEFAULT_SEND_PS_PER_BYTE),
        udp_port_base: optional(get("udp_port_base"), "udp_port_base")?.unwrap_or(0),
    };
    check_constraints(&config)?;
    Ok(config)
}

/// Checks every cross-field constraint of a config.
pub fn check_constraints(config: &BenchmarkConfig) -> Result<(), ConfigError> {
    let fail = |msg: String| Err(ConfigError::Constraint(msg));
    if config.run_id.is_empty()
        || !config
            .run_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        return fail(format!(
            "run_id `{}` must be non-empty and use only [A-Za-z0-9._-]",
            config.run_id
        ));
    }
    if config.node_count < 2 {
        return fail(format!(
            "node_count must be >= 2, got {}",
            config.node_count
        ));
    }
    if config.node_count > u32::from(u16::MAX) {
        return fail(format!("node_count must be <= {}", u16::MAX));
    }
    if config.topology_kind == TopologyKind::Paired && !config.node_count.is_multiple_of(2) {
        return fail("PAIRED requires even node_count".into());
    }
    if config.frequency_hz == 0 || config.frequency_hz > 1_000_000_000 {
        return fail("frequency_hz must be in 1..=1e9".into());
    }
    if config.duration.is_zero() {
        return fail("duration_s must be positive".into());
    }
    if config.fragment_payload_bytes == 0 {
        return fail("fragment_payload_bytes must be positive".into());
    }
    let limit = match config.backend {
        Backend::Udp => MAX_UDP_FRAGMENT_PAYLOAD,
        Backend::Sim => MAX_SIM_FRAGMENT_PAYLOAD,
    };
    if config.fragment_payload_bytes > limit {
        return fail(format!(
            "fragment_payload_bytes {} exceeds {limit} for backend {}",
            config.fragment_payload_bytes, config.backend
        ));
    }
    let fragments =
        u64::from(config.payload_bytes.max(1)).div_ceil(u64::from(config.fragment_payload_bytes));
    if fragments > u64::from(u16::MAX) {
        return fail("payload needs more than 65535 fragments".into());
    }
    if !(0.0..=1.0).contains(&config.loss_prob) {
        return fail(format!(
            "loss_prob must be in [0, 1], got {}",
            config.loss_prob
        ));
    }
    if config.backend == Backend::Udp && (config.loss_prob != 0.0 || config.sim_delay_ns != 0) {
        return fail("loss injection is SIM-only".into());
    }
    if config.max_repair_rounds == 0 {
        return fail("max_repair_rounds must be positive".into());
    }
    if config.repair_interval_ms == 0 {
        return fail("repair_interval_ms must be positive".into());
    }
    let count = config.expected_message_count();
    if count > u64::from(u32::MAX) {
        return fail("frequency_hz * duration_s exceeds the 32-bit sequence space".into());
    }
    Ok(())
}

pub fn default_run_id(
    node_count: u32,
    kind: TopologyKind,
    payload_bytes: u32,
    frequency_hz: u32,
) -> String {
    format!(
        "n{node_count}-{}-{payload_bytes}B-{frequency_hz}Hz",
        kind.as_str().to_ascii_lowercase()
    )
}

fn required<T: FromStr>(value: Option<&str>, key: &'static str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    optional(value, key)?.ok_or(ConfigError::MissingKey(key))
}

fn optional<T: FromStr>(value: Option<&str>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| ConfigError::invalid(key, v, e.to_string()))
        })
        .transpose()
}

/// Parses decimal seconds (`60`, `6`, `0.05`) exactly, to nanosecond resolution.
pub fn parse_seconds(text: &str) -> Result<Duration, String> {
    let text = text.trim();
    let (whole, frac) = match text.split_once('.') {
        Some((w, f)) => (w, f),
        None => (text, ""),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(whole) || !(frac.is_empty() || digits(frac)) {
        return Err("expected decimal seconds".into());
    }
    if frac.len() > 9 {
        return Err("at most 9 fractional digits".into());
    }
    let secs: u64 = whole
        .parse()
        .map_err(|_| "seconds out of range".to_string())?;
    let nanos: u32 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<9}").parse().expect("nine digits")
    };
    Ok(Duration::new(secs, nanos))
}

/// Inverse of [`parse_seconds`]: shortest exact decimal.
pub fn format_seconds(duration: Duration) -> String {
    let nanos = duration.subsec_nanos();
    if nanos == 0 {
        duration.as_secs().to_string()
    } else {
        let frac = format!("{nanos:09}");
        format!("{}.{}", duration.as_secs(), frac.trim_end_matches('0'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_example_fills_defaults() {
        let cfg = validate_config(
            "node_count = 32\ntopology_kind = ONE_TO_MANY\npayload_bytes = 65536\nfrequency_hz = 10\nduration_s = 60\n",
        )
        .unwrap();
        assert_eq!(cfg.node_count, 32);
        assert_eq!(cfg.fragment_payload_bytes, 65_000);
        assert_eq!(cfg.discovery_wait_ms, 1_000);
        assert_eq!(cfg.drain_ms, 500);
        assert_eq!(cfg.max_repair_rounds, 10);
        assert_eq!(cfg.loss_prob, 0.0);
        assert_eq!(cfg.backend, Backend::Sim);
        assert_eq!(cfg.run_id, "n32-one_to_many-65536B-10Hz");
        assert_eq!(cfg.expected_message_count(), 600);
    }

    #[test]
    fn paired_requires_even_nodes() {
        let err = validate_config(
            "node_count = 3\ntopology_kind = PAIRED\npayload_bytes = 16\nfrequency_hz = 10\nduration_s = 6\n",
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "PAIRED requires even node_count");
    }

    #[test]
    fn loss_with_udp_rejected() {
        let err = validate_config(
            "node_count = 2\ntopology_kind = PAIRED\npayload_bytes = 16\nfrequency_hz = 10\nduration_s = 6\nbackend = UDP\nloss_prob = 0.1\n",
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("loss injection is SIM-only"),
            "{err}"
        );
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        assert_eq!(
            parse_document("payload = 3\n").unwrap_err(),
            ConfigError::UnknownKey("payload".into())
        );
        assert_eq!(
            parse_document("seed = 1\nseed = 2\n").unwrap_err(),
            ConfigError::DuplicateKey("seed".into())
        );
        assert!(matches!(
            parse_document("# ok\nseed 1\n").unwrap_err(),
            ConfigError::Syntax { line: 2, .. }
        ));
    }

    #[test]
    fn fragment_limit_depends_on_backend() {
        let base = "node_count = 2\ntopology_kind = PAIRED\npayload_bytes = 16\nfrequency_hz = 10\nduration_s = 6\nfragment_payload_bytes = 65536\n";
        assert!(validate_config(base).is_ok());
        assert!(validate_config(&format!("{base}backend = UDP\n")).is_err());
    }

    #[test]
    fn expected_counts() {
        assert_eq!(expected_message_count(10, Duration::from_secs(60)), 600);
        assert_eq!(expected_message_count(100, Duration::from_secs(60)), 6000);
        assert_eq!(
            expected_message_count(10, parse_seconds("0.05").unwrap()),
            0
        );
        assert_eq!(
            expected_message_count(100, parse_seconds("0.29").unwrap()),
            29
        );
    }

    #[test]
    fn seconds_roundtrip() {
        for text in ["6", "60", "0.05", "1.5", "0.000000001"] {
            assert_eq!(format_seconds(parse_seconds(text).unwrap()), text);
        }
        assert!(parse_seconds("-1").is_err());
        assert!(parse_seconds("1e3").is_err());
    }

    #[test]
    fn document_roundtrip() {
        let cfg = validate_config(
            "node_count = 8\ntopology_kind = many_to_one\npayload_bytes = 0\nfrequency_hz = 100\nduration_s = 0.5\nloss_prob = 0.25\nseed = 9\n",
        )
        .unwrap();
        assert_eq!(validate_config(&cfg.to_document()).unwrap(), cfg);

        let mut udp = cfg.clone();
        udp.backend = Backend::Udp;
        udp.loss_prob = 0.0;
        udp.udp_port_base = 4000;
        assert_eq!(validate_config(&udp.to_document()).unwrap(), udp);
    }
}
