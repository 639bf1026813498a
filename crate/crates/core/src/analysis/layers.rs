//! Attribution of latency to the stages of the message path.
//!
//! A message's publisher-side trace telescopes: the deltas between adjacent
//! publisher stages sum to WIRE_SEND − APP_PUBLISH exactly. Shares are ratios
//! of summed deltas to summed spans over complete messages, which equals the
//! ratio of the means.

use std::collections::BTreeMap;

use super::stats::latency_stats;
use crate::model::{NodeId, TopicId};
use crate::stack::{Stage, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub from: Stage,
    pub to: Stage,
    pub mean_ns: u64,
    pub median_ns: u64,
    /// Fraction of the enclosing side's span.
    pub share: f64,
}

impl PairStats {
    pub fn label(&self) -> String {
        format!("{}>{}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpanStats {
    pub count: u64,
    pub mean_ns: u64,
    pub median_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerBreakdown {
    /// The five publisher-side stage pairs, in path order.
    pub publisher_pairs: Vec<PairStats>,
    /// The four subscriber-side stage pairs, in path order.
    pub subscriber_pairs: Vec<PairStats>,
    /// APP_PUBLISH → WIRE_SEND.
    pub publisher_span: Option<SpanStats>,
    /// WIRE_SEND → WIRE_RECV_COMPLETE, per delivery.
    pub wire_span: Option<SpanStats>,
    /// WIRE_RECV_COMPLETE → CALLBACK_END, per delivery.
    pub subscriber_span: Option<SpanStats>,
    /// Messages lacking a publisher-side stage (or with a stage twice).
    pub excluded_publisher: u64,
    /// Deliveries lacking a subscriber-side stage.
    pub excluded_subscriber: u64,
}

/// Per-message publisher-side deltas; `None` when the trace is incomplete
/// or out of order.
fn deltas<const N: usize>(stamps: &[Option<u64>; N]) -> Option<[u64; N]> {
    let mut ts = [0u64; N];
    for (i, s) in stamps.iter().enumerate() {
        ts[i] = (*s)?;
    }
    let mut out = [0u64; N];
    for i in 1..N {
        out[i - 1] = ts[i].checked_sub(ts[i - 1])?;
    }
    out[N - 1] = ts[N - 1] - ts[0];
    Some(out)
}

struct Slots<const N: usize> {
    stamps: [Option<u64>; N],
    duplicate: bool,
}

impl<const N: usize> Default for Slots<N> {
    fn default() -> Self {
        Slots {
            stamps: [None; N],
            duplicate: false,
        }
    }
}

impl<const N: usize> Slots<N> {
    fn put(&mut self, index: usize, ts: u64) {
        if self.stamps[index].replace(ts).is_some() {
            self.duplicate = true;
        }
    }

    fn complete(&self) -> Option<[u64; N]> {
        if self.duplicate {
            None
        } else {
            deltas(&self.stamps)
        }
    }
}

fn span(values: &[u64]) -> Option<SpanStats> {
    let s = latency_stats(values).ok()?;
    Some(SpanStats {
        count: s.count,
        mean_ns: s.mean_ns,
        median_ns: s.median_ns,
    })
}

/// `rows[m]` holds the adjacent deltas of message m followed by its span.
fn pair_stats(stages: &[Stage], rows: &[Vec<u64>]) -> Vec<PairStats> {
    if rows.is_empty() {
        return Vec::new();
    }
    let pairs = stages.len() - 1;
    let total: u128 = rows.iter().map(|r| r[pairs] as u128).sum();
    (0..pairs)
        .map(|k| {
            let column: Vec<u64> = rows.iter().map(|r| r[k]).collect();
            let stats = latency_stats(&column).expect("non-empty");
            let sum: u128 = column.iter().map(|&d| d as u128).sum();
            PairStats {
                from: stages[k],
                to: stages[k + 1],
                mean_ns: stats.mean_ns,
                median_ns: stats.median_ns,
                share: if total == 0 {
                    0.0
                } else {
                    sum as f64 / total as f64
                },
            }
        })
        .collect()
}

pub fn layer_breakdown(traces: &[TraceEvent]) -> LayerBreakdown {
    let mut publisher: BTreeMap<(TopicId, u32), Slots<6>> = BTreeMap::new();
    let mut subscriber: BTreeMap<(TopicId, u32, NodeId), Slots<6>> = BTreeMap::new();
    for t in traces {
        if t.stage.is_publisher_side() {
            publisher
                .entry((t.topic_id, t.seq))
                .or_default()
                .put(t.stage as usize, t.ts_ns);
        } else {
            // slot 0 mirrors the publisher's WIRE_SEND, filled in below
            subscriber
                .entry((t.topic_id, t.seq, t.node_id))
                .or_default()
                .put(t.stage as usize - Stage::WireSend as usize, t.ts_ns);
        }
    }

    let mut out = LayerBreakdown::default();
    let mut pub_rows = Vec::new();
    let mut wire_send = BTreeMap::new();
    for (key, slots) in &publisher {
        match slots.complete() {
            Some(d) => {
                pub_rows.push(d.to_vec());
                wire_send.insert(*key, slots.stamps[5].expect("complete"));
            }
            None => out.excluded_publisher += 1,
        }
    }

    let mut sub_rows = Vec::new();
    let mut wire = Vec::new();
    for ((topic, seq, _), slots) in subscriber.iter_mut() {
        // wire span needs the publisher side; the subscriber pairs do not
        let mut own = Slots::<5> {
            stamps: [None; 5],
            duplicate: slots.duplicate,
        };
        own.stamps.copy_from_slice(&slots.stamps[1..]);
        match own.complete() {
            Some(d) => {
                sub_rows.push(d.to_vec());
                if let Some(&sent) = wire_send.get(&(*topic, *seq)) {
                    let recv = own.stamps[0].expect("complete");
                    if let Some(w) = recv.checked_sub(sent) {
                        wire.push(w);
                    }
                }
            }
            None => out.excluded_subscriber += 1,
        }
    }

    out.publisher_pairs = pair_stats(&Stage::PUBLISHER, &pub_rows);
    out.subscriber_pairs = pair_stats(&Stage::SUBSCRIBER, &sub_rows);
    out.publisher_span = span(&pub_rows.iter().map(|r| r[5]).collect::<Vec<_>>());
    out.subscriber_span = span(&sub_rows.iter().map(|r| r[4]).collect::<Vec<_>>());
    out.wire_span = span(&wire);
    out
}
