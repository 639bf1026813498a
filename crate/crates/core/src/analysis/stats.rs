//! Latency distribution summaries in exact integer arithmetic.
//!
//! Quartiles use linear interpolation between order statistics: the k-th
//! quartile of n sorted values sits at position h = (n − 1)·k/4. Every
//! reported value is rounded half-up to whole nanoseconds. The standard
//! deviation is the population form.

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ns: u64,
    pub stddev_ns: u64,
    pub min_ns: u64,
    pub q1_ns: u64,
    pub median_ns: u64,
    pub q3_ns: u64,
    /// Lowest value within 1.5·IQR below q1, never above q1.
    pub whisker_low_ns: u64,
    /// Highest value within 1.5·IQR above q3, never below q3.
    pub whisker_high_ns: u64,
    pub max_ns: u64,
}

impl LatencyStats {
    pub fn iqr_ns(&self) -> u64 {
        self.q3_ns - self.q1_ns
    }
}

/// Quartile `k` (0..=4) of `sorted`.
fn quartile(sorted: &[u64], k: u64) -> u64 {
    let pos = (sorted.len() as u64 - 1) * k;
    let i = (pos / 4) as usize;
    let frac = (pos % 4) as u128;
    if frac == 0 {
        return sorted[i];
    }
    let lo = sorted[i] as u128;
    let hi = sorted[i + 1] as u128;
    ((lo * 4 + (hi - lo) * frac + 2) / 4) as u64
}

/// Rounded mean; zero for an empty slice.
pub fn mean_ns(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let n = values.len() as u128;
    let sum: u128 = values.iter().map(|&v| v as u128).sum();
    ((2 * sum + n) / (2 * n)) as u64
}

/// round(sqrt(var)) for var = numerator / n², found exactly.
fn rounded_root(numerator: u128, n: u128) -> u64 {
    // r is the answer iff (2r − 1)²·n² ≤ 4·numerator < (2r + 1)²·n²
    let fits = |r: u128| r == 0 || (2 * r - 1) * (2 * r - 1) * n * n <= 4 * numerator;
    let mut r = ((numerator as f64).sqrt() / n as f64).round() as u128;
    while !fits(r) {
        r -= 1;
    }
    while fits(r + 1) {
        r += 1;
    }
    r as u64
}

pub fn latency_stats(latencies: &[u64]) -> Result<LatencyStats, AnalysisError> {
    if latencies.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let mut v = latencies.to_vec();
    v.sort_unstable();
    let n = v.len() as u128;
    let sum: u128 = v.iter().map(|&x| x as u128).sum();
    let sum_sq: u128 = v.iter().map(|&x| x as u128 * x as u128).sum();

    let q1 = quartile(&v, 1);
    let q3 = quartile(&v, 3);
    let iqr = (q3 - q1) as i128;
    // fences compared in doubled units so 1.5·IQR stays integral
    let low_fence = 2 * q1 as i128 - 3 * iqr;
    let high_fence = 2 * q3 as i128 + 3 * iqr;
    let lowest_inside = v
        .iter()
        .copied()
        .find(|&x| 2 * x as i128 >= low_fence)
        .unwrap_or(q1);
    let highest_inside = v
        .iter()
        .rev()
        .copied()
        .find(|&x| 2 * x as i128 <= high_fence)
        .unwrap_or(q3);

    Ok(LatencyStats {
        count: v.len() as u64,
        mean_ns: mean_ns(&v),
        stddev_ns: rounded_root(n * sum_sq - sum * sum, n),
        min_ns: v[0],
        q1_ns: q1,
        median_ns: quartile(&v, 2),
        q3_ns: q3,
        whisker_low_ns: lowest_inside.min(q1),
        whisker_high_ns: highest_inside.max(q3),
        max_ns: v[v.len() - 1],
    })
}
