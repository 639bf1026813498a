//! Parameter matrices and their expansion into run configurations.

use std::collections::BTreeMap;

use super::config::{
    default_run_id, parse_document, validate_pairs, BenchmarkConfig, ConfigError, TopologyKind,
};

/// Dimension lists plus fields shared by every expanded config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMatrix {
    pub node_counts: Vec<u32>,
    pub topology_kinds: Vec<TopologyKind>,
    pub payload_bytes: Vec<u32>,
    pub frequencies_hz: Vec<u32>,
    /// Remaining config keys, applied verbatim to every run.
    pub fixed: BTreeMap<String, String>,
}

const DIMENSION_KEYS: [&str; 4] = [
    "node_count",
    "topology_kind",
    "payload_bytes",
    "frequency_hz",
];

impl SweepMatrix {
    /// Parses a matrix document: config keys, with comma-separated lists for the
    /// four dimension keys.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs = parse_document(text)?;
        if pairs.contains_key("run_id") {
            return Err(ConfigError::Constraint(
                "run_id is derived per expanded config; remove it from the matrix".into(),
            ));
        }
        let mut take = |key: &'static str| -> Result<Vec<String>, ConfigError> {
            let raw = pairs.remove(key).ok_or(ConfigError::MissingKey(key))?;
            Ok(raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect())
        };
        let node_counts = parse_list(take(DIMENSION_KEYS[0])?, "node_count")?;
        let topology_kinds = parse_list(take(DIMENSION_KEYS[1])?, "topology_kind")?;
        let payload_bytes = parse_list(take(DIMENSION_KEYS[2])?, "payload_bytes")?;
        let frequencies_hz = parse_list(take(DIMENSION_KEYS[3])?, "frequency_hz")?;
        Ok(SweepMatrix {
            node_counts,
            topology_kinds,
            payload_bytes,
            frequencies_hz,
            fixed: pairs,
        })
    }

    /// Renders the matrix back into document form.
    pub fn to_document(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
        }
        let mut out = String::new();
        out.push_str(&format!("node_count = {}\n", join(&self.node_counts)));
        out.push_str(&format!("topology_kind = {}\n", join(&self.topology_kinds)));
        out.push_str(&format!("payload_bytes = {}\n", join(&self.payload_bytes)));
        out.push_str(&format!("frequency_hz = {}\n", join(&self.frequencies_hz)));
        for (k, v) in &self.fixed {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

fn parse_list<T: std::str::FromStr>(items: Vec<String>, key: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    items
        .into_iter()
        .map(|s| {
            s.parse::<T>().map_err(|e| ConfigError::InvalidValue {
                key: key.to_string(),
                value: s.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}

fn dedup<T: PartialEq + Clone>(items: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(items.len());
    for item in items {
        if !out.contains(item) {
            out.push(item.clone());
        }
    }
    out
}

/// Cartesian product ordered by (node_count, topology, size, frequency), in list
/// order. At `node_count = 2` every shape is the same 1–1 graph, so only the
/// first listed topology kind is kept there.
pub fn expand_sweep(matrix: &SweepMatrix) -> Result<Vec<BenchmarkConfig>, ConfigError> {
    for (name, empty) in [
        ("node_count", matrix.node_counts.is_empty()),
        ("topology_kind", matrix.topology_kinds.is_empty()),
        ("payload_bytes", matrix.payload_bytes.is_empty()),
        ("frequency_hz", matrix.frequencies_hz.is_empty()),
    ] {
        if empty {
            return Err(ConfigError::Constraint(format!(
                "sweep dimension `{name}` is empty"
            )));
        }
    }
    if matrix.fixed.contains_key("run_id") {
        return Err(ConfigError::Constraint(
            "run_id is derived per expanded config".into(),
        ));
    }
    let kinds = dedup(&matrix.topology_kinds);
    let mut out = Vec::new();
    for &nodes in &dedup(&matrix.node_counts) {
        let shapes: &[TopologyKind] = if nodes == 2 { &kinds[..1] } else { &kinds };
        for &kind in shapes {
            if kind == TopologyKind::Paired && nodes % 2 == 1 {
                return Err(ConfigError::Constraint(format!(
                    "PAIRED requires even node_count (matrix contains {nodes})"
                )));
            }
            for &size in &dedup(&matrix.payload_bytes) {
                for &freq in &dedup(&matrix.frequencies_hz) {
                    let mut pairs = matrix.fixed.clone();
                    pairs.insert("run_id".into(), default_run_id(nodes, kind, size, freq));
                    pairs.insert("node_count".into(), nodes.to_string());
                    pairs.insert("topology_kind".into(), kind.to_string());
                    pairs.insert("payload_bytes".into(), size.to_string());
                    pairs.insert("frequency_hz".into(), freq.to_string());
                    out.push(validate_pairs(&pairs)?);
                }
            }
        }
    }
    Ok(out)
}

/// Built-in parameter matrices.
pub mod presets {
    use super::*;

    pub const STRUCT16: u32 = 16;
    pub const ARRAY64K: u32 = 65_536;
    pub const POINTCLOUD512K: u32 = 524_288;
    pub const POINTCLOUD1M: u32 = 1_048_576;
    pub const POINTCLOUD2M: u32 = 2_097_152;

    fn fixed() -> BTreeMap<String, String> {
        BTreeMap::from([("duration_s".to_string(), "60".to_string())])
    }

    /// Comparative benchmark: 1–1 and 1–31 at 10 Hz over three message sizes.
    pub fn table1() -> SweepMatrix {
        SweepMatrix {
            node_counts: vec![2, 32],
            topology_kinds: vec![TopologyKind::OneToMany],
            payload_bytes: vec![STRUCT16, ARRAY64K, POINTCLOUD1M],
            frequencies_hz: vec![10],
            fixed: fixed(),
        }
    }

    /// Detailed benchmark: every shape over 2–64 nodes, five sizes, two rates.
    pub fn table2() -> SweepMatrix {
        SweepMatrix {
            node_counts: vec![2, 8, 32, 64],
            topology_kinds: TopologyKind::ALL.to_vec(),
            payload_bytes: vec![0, ARRAY64K, POINTCLOUD512K, POINTCLOUD1M, POINTCLOUD2M],
            frequencies_hz: vec![10, 100],
            fixed: fixed(),
        }
    }

    pub fn by_name(name: &str) -> Option<SweepMatrix> {
        match name {
            "table1" => Some(table1()),
            "table2" => Some(table2()),
            _ => None,
        }
    }
}
