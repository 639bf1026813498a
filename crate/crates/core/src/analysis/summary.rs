//! One run's full report and its tabular and textual renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use super::categories::{categorize, loss_rate, pair_losses, CategoryCounts, PairLoss};
use super::fairness::{fairness, FairnessReport};
use super::layers::{layer_breakdown, LayerBreakdown, SpanStats};
use super::stats::{latency_stats, LatencyStats};
use super::timeline::timeline;
use super::AnalysisError;
use crate::model::{BenchmarkConfig, NodeId};
use crate::report::ReportRow;
use crate::stack::{DeliveryStatus, PublisherRecord, SampleRecord, TraceEvent};

pub const DEFAULT_TIMELINE_BIN_NS: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisOptions {
    /// Leave LATE deliveries out of latency statistics.
    pub in_time_only: bool,
    pub timeline_bin_ns: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            in_time_only: false,
            timeline_bin_ns: DEFAULT_TIMELINE_BIN_NS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_id: Arc<str>,
    pub options: AnalysisOptions,
    pub period_ns: u64,
    pub categories: CategoryCounts,
    /// Over every counted delivery; `None` when nothing was delivered.
    pub latency: Option<LatencyStats>,
    pub per_subscriber: Vec<(NodeId, LatencyStats)>,
    /// Overall loss percentage; `None` when nothing was sent.
    pub loss_pct: Option<f64>,
    pub pair_losses: Vec<PairLoss>,
    pub layers: LayerBreakdown,
    /// `None` with fewer than two subscribers.
    pub fairness: Option<FairnessReport>,
    pub timeline: Vec<Option<u64>>,
}

/// Computes the report of one run from its persisted artifacts alone.
pub fn analyze(
    config: &BenchmarkConfig,
    samples: &[SampleRecord],
    publisher_records: &[PublisherRecord],
    traces: &[TraceEvent],
    options: AnalysisOptions,
) -> Result<RunReport, AnalysisError> {
    let period_ns = config.period_ns();
    let categories = categorize(samples, publisher_records, period_ns)?;
    let counted = |s: &&SampleRecord| match s.status {
        DeliveryStatus::InTime => true,
        DeliveryStatus::Late => !options.in_time_only,
        DeliveryStatus::Lost => false,
    };
    let latencies: Vec<u64> = samples
        .iter()
        .filter(counted)
        .filter_map(|s| s.latency_ns)
        .collect();
    let mut by_subscriber: BTreeMap<NodeId, Vec<u64>> = BTreeMap::new();
    for s in samples.iter().filter(counted) {
        if let Some(l) = s.latency_ns {
            by_subscriber.entry(s.subscriber_node).or_default().push(l);
        }
    }
    let per_subscriber = by_subscriber
        .iter()
        .map(|(&id, v)| latency_stats(v).map(|s| (id, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let fairness = match fairness(&by_subscriber) {
        Ok(f) => Some(f),
        Err(AnalysisError::TooFewSubscribers(_)) => None,
        Err(e) => return Err(e),
    };
    // the schedule's origin is the earliest scheduled tick
    let t0_ns = publisher_records
        .iter()
        .map(|r| r.scheduled_ns)
        .min()
        .unwrap_or(0);
    let points: Vec<(u64, u64)> = samples
        .iter()
        .filter(counted)
        .filter_map(|s| s.latency_ns.map(|l| (s.publish_ts_ns, l)))
        .collect();

    Ok(RunReport {
        run_id: Arc::from(config.run_id.as_str()),
        options,
        period_ns,
        categories,
        latency: latency_stats(&latencies).ok(),
        per_subscriber,
        loss_pct: loss_rate(categories.lost, samples.len() as u64).ok(),
        pair_losses: pair_losses(samples),
        layers: layer_breakdown(traces),
        fairness,
        timeline: timeline(&points, t0_ns, options.timeline_bin_ns)?,
    })
}

fn pct(v: f64) -> String {
    format!("{v:.4}")
}

fn share(v: f64) -> String {
    format!("{v:.6}")
}

const LATENCY_METRICS: [&str; 10] = [
    "latency_count",
    "latency_mean_ns",
    "latency_stddev_ns",
    "latency_min_ns",
    "latency_q1_ns",
    "latency_median_ns",
    "latency_q3_ns",
    "latency_whisker_low_ns",
    "latency_whisker_high_ns",
    "latency_max_ns",
];

fn latency_values(s: &LatencyStats) -> [u64; 10] {
    [
        s.count,
        s.mean_ns,
        s.stddev_ns,
        s.min_ns,
        s.q1_ns,
        s.median_ns,
        s.q3_ns,
        s.whisker_low_ns,
        s.whisker_high_ns,
        s.max_ns,
    ]
}

fn ms(ns: u64) -> String {
    format!("{:.3} ms", ns as f64 / 1e6)
}

impl RunReport {
    /// Rows of report.csv, in a fixed order.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        let mut push = |metric: &str, group: &str, value: String| {
            rows.push(ReportRow {
                run_id: self.run_id.clone(),
                metric: metric.to_string(),
                group: group.to_string(),
                value,
            })
        };
        let c = &self.categories;
        for (metric, value) in [
            ("scheduled", c.scheduled()),
            ("sent_in_time", c.sent_in_time),
            ("sent_late", c.sent_late),
            ("unsent", c.unsent),
            ("in_time", c.in_time),
            ("late", c.late),
            ("lost", c.lost),
        ] {
            push(metric, "all", value.to_string());
        }
        push(
            "loss_pct",
            "all",
            self.loss_pct.map(pct).unwrap_or_default(),
        );
        for p in &self.pair_losses {
            push(
                "loss_pct",
                &format!("pair:{}-{}", p.publisher, p.subscriber),
                pct(p.pct),
            );
        }

        let mut latency_rows = |group: &str, stats: Option<&LatencyStats>| {
            let values = stats.map(latency_values);
            for (i, metric) in LATENCY_METRICS.iter().enumerate() {
                push(
                    metric,
                    group,
                    values.map(|v| v[i].to_string()).unwrap_or_default(),
                );
            }
        };
        latency_rows("all", self.latency.as_ref());
        for (id, s) in &self.per_subscriber {
            latency_rows(&format!("sub:{id}"), Some(s));
        }

        let l = &self.layers;
        for p in l.publisher_pairs.iter().chain(&l.subscriber_pairs) {
            let label = p.label();
            push("layer_mean_ns", &label, p.mean_ns.to_string());
            push("layer_median_ns", &label, p.median_ns.to_string());
            push("layer_share", &label, share(p.share));
        }
        for (group, span) in [
            ("publisher", l.publisher_span),
            ("wire", l.wire_span),
            ("subscriber", l.subscriber_span),
        ] {
            let v = |f: fn(&SpanStats) -> u64| span.as_ref().map(f).map(|x| x.to_string());
            push(
                "span_count",
                group,
                v(|s| s.count).unwrap_or_else(|| "0".into()),
            );
            push("span_mean_ns", group, v(|s| s.mean_ns).unwrap_or_default());
            push(
                "span_median_ns",
                group,
                v(|s| s.median_ns).unwrap_or_default(),
            );
        }
        push(
            "layer_excluded",
            "publisher",
            l.excluded_publisher.to_string(),
        );
        push(
            "layer_excluded",
            "subscriber",
            l.excluded_subscriber.to_string(),
        );

        if let Some(f) = &self.fairness {
            push("fairness_spread_ns", "all", f.spread_ns.to_string());
            push(
                "fairness_staircase",
                "all",
                u8::from(f.staircase).to_string(),
            );
        }
        for (k, v) in self.timeline.iter().enumerate() {
            push(
                "timeline_mean_ns",
                &format!("bin:{k}"),
                v.map(|x| x.to_string()).unwrap_or_default(),
            );
        }
        rows
    }

    /// Human-readable summary; milliseconds for readability.
    pub fn render_text(&self) -> String {
        let mut t = String::new();
        let c = &self.categories;
        let _ = writeln!(t, "run {}", self.run_id);
        if self.options.in_time_only {
            let _ = writeln!(t, "latency statistics exclude LATE deliveries");
        }
        let _ = writeln!(t, "period {}", ms(self.period_ns));
        let _ = writeln!(
            t,
            "publisher: scheduled {}  sent in time {}  sent late {}  unsent {}",
            c.scheduled(),
            c.sent_in_time,
            c.sent_late,
            c.unsent
        );
        let _ = writeln!(
            t,
            "subscriber: in time {}  late {}  lost {}  loss {}",
            c.in_time,
            c.late,
            c.lost,
            self.loss_pct
                .map(|p| format!("{p:.2}%"))
                .unwrap_or_else(|| "n/a".into())
        );
        match &self.latency {
            Some(s) => {
                let _ = writeln!(
                    t,
                    "latency: n {}  mean {}  sd {}  min {}  q1 {}  median {}  q3 {}  max {}",
                    s.count,
                    ms(s.mean_ns),
                    ms(s.stddev_ns),
                    ms(s.min_ns),
                    ms(s.q1_ns),
                    ms(s.median_ns),
                    ms(s.q3_ns),
                    ms(s.max_ns)
                );
            }
            None => {
                let _ = writeln!(t, "latency: no deliveries");
            }
        }
        if !self.layers.publisher_pairs.is_empty() {
            let _ = writeln!(t, "publisher-side layers (share of APP_PUBLISH>WIRE_SEND):");
            for p in &self.layers.publisher_pairs {
                let _ = writeln!(
                    t,
                    "  {:<32} mean {:>12}  share {:>6.2}%",
                    p.label(),
                    ms(p.mean_ns),
                    100.0 * p.share
                );
            }
        }
        if let Some(w) = &self.layers.wire_span {
            let _ = writeln!(t, "wire span mean {}", ms(w.mean_ns));
        }
        if let Some(f) = &self.fairness {
            let _ = writeln!(
                t,
                "fairness: {} subscribers, spread {}, staircase {}",
                f.per_subscriber.len(),
                ms(f.spread_ns),
                if f.staircase { "yes" } else { "no" }
            );
        }
        let excluded = self.layers.excluded_publisher + self.layers.excluded_subscriber;
        if excluded > 0 {
            let _ = writeln!(t, "incomplete traces excluded from layers: {excluded}");
        }
        t
    }
}
