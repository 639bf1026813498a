//! Latency over the course of a run.

use super::stats::mean_ns;
use super::AnalysisError;

/// Mean latency per `bin_ns`-wide bin of publish time, counted from `t0_ns`.
/// Points are (publish_ts_ns, latency_ns); bins without points are `None`.
pub fn timeline(
    points: &[(u64, u64)],
    t0_ns: u64,
    bin_ns: u64,
) -> Result<Vec<Option<u64>>, AnalysisError> {
    if bin_ns == 0 {
        return Err(AnalysisError::ZeroBin);
    }
    let index = |ts: u64| (ts.saturating_sub(t0_ns) / bin_ns) as usize;
    let bins = points
        .iter()
        .map(|&(ts, _)| index(ts) + 1)
        .max()
        .unwrap_or(0);
    let mut grouped: Vec<Vec<u64>> = vec![Vec::new(); bins];
    for &(ts, latency) in points {
        grouped[index(ts)].push(latency);
    }
    Ok(grouped
        .iter()
        .map(|g| (!g.is_empty()).then(|| mean_ns(g)))
        .collect())
}
