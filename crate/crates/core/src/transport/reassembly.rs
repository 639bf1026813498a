//! Receiver-side fragment reassembly and NACK-driven repair bookkeeping.

use std::collections::{BTreeMap, HashSet};

use bytes::Bytes;
use thiserror::Error;

use super::wire::{NackRecord, PacketType, WirePacket};
use crate::model::{NodeId, TopicId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReassemblyError {
    #[error("topic {topic_id} publisher {publisher_id} seq {seq}: frag_count {got} conflicts with earlier {expected}")]
    FragCountMismatch {
        topic_id: TopicId,
        publisher_id: NodeId,
        seq: u32,
        expected: u16,
        got: u16,
    },
    #[error("expected a DATA packet, got {0:?}")]
    NotData(PacketType),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamKey {
    pub topic_id: TopicId,
    pub publisher_id: NodeId,
}

/// A fully reassembled message. The body is kept as the received fragment
/// slices, in order, without copying.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletedMessage {
    pub topic_id: TopicId,
    pub publisher_id: NodeId,
    pub seq: u32,
    pub publish_ts_ns: u64,
    pub chunks: Vec<Bytes>,
}

impl CompletedMessage {
    pub fn payload_len(&self) -> usize {
        self.chunks.iter().map(Bytes::len).sum()
    }

    pub fn to_vec(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload_len());
        for c in &self.chunks {
            out.extend_from_slice(c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeedOutcome {
    Complete(CompletedMessage),
    Pending,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReassemblyPolicy {
    /// Register sequence gaps and heartbeat announcements as missing messages.
    pub track_gaps: bool,
    /// Keep at most this many incomplete messages per stream; older ones are abandoned.
    pub max_incomplete: Option<usize>,
    pub repair_interval_ns: u64,
    pub max_repair_rounds: u32,
}

impl ReassemblyPolicy {
    pub fn best_effort() -> Self {
        ReassemblyPolicy {
            track_gaps: false,
            max_incomplete: Some(8),
            repair_interval_ns: 5_000_000,
            max_repair_rounds: 10,
        }
    }

    pub fn reliable(repair_interval_ns: u64, max_repair_rounds: u32) -> Self {
        ReassemblyPolicy {
            track_gaps: true,
            max_incomplete: None,
            repair_interval_ns,
            max_repair_rounds,
        }
    }
}

#[derive(Debug)]
struct Partial {
    /// Zero until the first fragment (or a heartbeat) reveals it.
    frag_count: u16,
    chunks: Vec<Option<Bytes>>,
    received: u16,
    publish_ts_ns: u64,
    first_seen_ns: u64,
    nack_rounds: u32,
}

impl Partial {
    fn placeholder(now_ns: u64) -> Self {
        Partial {
            frag_count: 0,
            chunks: Vec::new(),
            received: 0,
            publish_ts_ns: 0,
            first_seen_ns: now_ns,
            nack_rounds: 0,
        }
    }

    fn set_frag_count(&mut self, count: u16) {
        self.frag_count = count;
        self.chunks = vec![None; count as usize];
    }
}

#[derive(Debug, Default)]
struct Stream {
    partial: BTreeMap<u32, Partial>,
    /// Completed or abandoned sequence numbers.
    resolved: HashSet<u32>,
    /// One past the highest sequence number known to exist.
    horizon: u32,
}

impl Stream {
    fn is_known(&self, seq: u32) -> bool {
        self.resolved.contains(&seq) || self.partial.contains_key(&seq)
    }

    fn register_upto(&mut self, end: u32, now_ns: u64) {
        for seq in self.horizon..end {
            if !self.is_known(seq) {
                self.partial.insert(seq, Partial::placeholder(now_ns));
            }
        }
        self.horizon = self.horizon.max(end);
    }
}

/// Per-(topic, publisher, seq) reassembly state of one receiving node.
#[derive(Debug)]
pub struct ReassemblyBuffer {
    policy: ReassemblyPolicy,
    streams: BTreeMap<StreamKey, Stream>,
    abandoned: Vec<(StreamKey, u32)>,
}

impl ReassemblyBuffer {
    pub fn new(policy: ReassemblyPolicy) -> Self {
        ReassemblyBuffer {
            policy,
            streams: BTreeMap::new(),
            abandoned: Vec::new(),
        }
    }

    pub fn policy(&self) -> &ReassemblyPolicy {
        &self.policy
    }

    /// Feeds one DATA fragment. Completes each message exactly once; fragments
    /// of completed or abandoned messages are reported as duplicates.
    pub fn feed(
        &mut self,
        packet: &WirePacket,
        now_ns: u64,
    ) -> Result<FeedOutcome, ReassemblyError> {
        if packet.packet_type != PacketType::Data {
            return Err(ReassemblyError::NotData(packet.packet_type));
        }
        let key = StreamKey {
            topic_id: packet.topic_id,
            publisher_id: packet.publisher_id,
        };
        let track_gaps = self.policy.track_gaps;
        let stream = self.streams.entry(key).or_default();
        if stream.resolved.contains(&packet.seq) {
            return Ok(FeedOutcome::Duplicate);
        }
        if track_gaps {
            stream.register_upto(packet.seq, now_ns);
        }
        stream.horizon = stream.horizon.max(packet.seq.saturating_add(1));

        let partial = stream
            .partial
            .entry(packet.seq)
            .or_insert_with(|| Partial::placeholder(now_ns));
        if partial.frag_count == 0 {
            partial.set_frag_count(packet.frag_count);
        } else if partial.frag_count != packet.frag_count {
            return Err(ReassemblyError::FragCountMismatch {
                topic_id: key.topic_id,
                publisher_id: key.publisher_id,
                seq: packet.seq,
                expected: partial.frag_count,
                got: packet.frag_count,
            });
        }
        let slot = &mut partial.chunks[packet.frag_index as usize];
        if slot.is_some() {
            return Ok(FeedOutcome::Duplicate);
        }
        *slot = Some(packet.payload.clone());
        partial.received += 1;
        partial.publish_ts_ns = packet.publish_ts_ns;

        if partial.received == partial.frag_count {
            let done = stream.partial.remove(&packet.seq).expect("present");
            stream.resolved.insert(packet.seq);
            return Ok(FeedOutcome::Complete(CompletedMessage {
                topic_id: key.topic_id,
                publisher_id: key.publisher_id,
                seq: packet.seq,
                publish_ts_ns: done.publish_ts_ns,
                chunks: done
                    .chunks
                    .into_iter()
                    .map(|c| c.expect("all present"))
                    .collect(),
            }));
        }

        if let Some(max) = self.policy.max_incomplete {
            while stream.partial.len() > max {
                let (&oldest, _) = stream.partial.iter().next().expect("non-empty");
                stream.partial.remove(&oldest);
                stream.resolved.insert(oldest);
                self.abandoned.push((key, oldest));
            }
        }
        Ok(FeedOutcome::Pending)
    }

    /// Records a publisher announcement that `last_seq` (of `frag_count`
    /// fragments) was sent, exposing any message never seen at all.
    pub fn note_heartbeat(&mut self, key: StreamKey, last_seq: u32, frag_count: u16, now_ns: u64) {
        if !self.policy.track_gaps {
            return;
        }
        let stream = self.streams.entry(key).or_default();
        stream.register_upto(last_seq.saturating_add(1), now_ns);
        if let Some(p) = stream.partial.get_mut(&last_seq) {
            if p.frag_count == 0 && frag_count > 0 {
                p.set_frag_count(frag_count);
            }
        }
    }

    /// One repair pass: a NACK for every incomplete message at least one repair
    /// interval old. Messages already NACKed `max_repair_rounds` times are
    /// abandoned instead.
    pub fn repair_round(&mut self, now_ns: u64) -> Vec<NackRecord> {
        let mut nacks = Vec::new();
        let policy = self.policy;
        for (key, stream) in self.streams.iter_mut() {
            let mut give_up = Vec::new();
            for (&seq, partial) in stream.partial.iter_mut() {
                if now_ns.saturating_sub(partial.first_seen_ns) < policy.repair_interval_ns {
                    continue;
                }
                if partial.nack_rounds >= policy.max_repair_rounds {
                    give_up.push(seq);
                    continue;
                }
                partial.nack_rounds += 1;
                let nack = if partial.frag_count == 0 {
                    NackRecord::whole_message(key.topic_id, key.publisher_id, seq)
                } else {
                    let missing = partial
                        .chunks
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.is_none())
                        .map(|(i, _)| i as u16);
                    NackRecord::from_missing(
                        key.topic_id,
                        key.publisher_id,
                        seq,
                        partial.frag_count,
                        missing,
                    )
                };
                nacks.push(nack);
            }
            for seq in give_up {
                stream.partial.remove(&seq);
                stream.resolved.insert(seq);
                self.abandoned.push((*key, seq));
            }
        }
        nacks
    }

    pub fn incomplete_count(&self) -> usize {
        self.streams.values().map(|s| s.partial.len()).sum()
    }

    /// Messages given up on since the last call.
    pub fn take_abandoned(&mut self) -> Vec<(StreamKey, u32)> {
        std::mem::take(&mut self.abandoned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag(seq: u32, index: u16, count: u16, body: &[u8]) -> WirePacket {
        WirePacket {
            packet_type: PacketType::Data,
            topic_id: 0,
            publisher_id: 1,
            seq,
            frag_index: index,
            frag_count: count,
            publish_ts_ns: 1000 + u64::from(seq),
            payload: Bytes::copy_from_slice(body),
        }
    }

    fn reliable() -> ReassemblyBuffer {
        ReassemblyBuffer::new(ReassemblyPolicy::reliable(5_000_000, 10))
    }

    #[test]
    fn single_fragment_completes_immediately() {
        let mut buf = reliable();
        match buf.feed(&frag(0, 0, 1, b"hi"), 0).unwrap() {
            FeedOutcome::Complete(m) => {
                assert_eq!(m.to_vec(), b"hi");
                assert_eq!(m.publish_ts_ns, 1000);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sixteen_fragments_in_order() {
        let mut buf = reliable();
        let body: Vec<u8> = (0..16 * 4).map(|i| i as u8).collect();
        let mut outcomes = Vec::new();
        for i in 0..16u16 {
            let s = i as usize * 4;
            outcomes.push(buf.feed(&frag(0, i, 16, &body[s..s + 4]), 0).unwrap());
        }
        assert!(outcomes[..15].iter().all(|o| *o == FeedOutcome::Pending));
        match &outcomes[15] {
            FeedOutcome::Complete(m) => assert_eq!(m.to_vec(), body),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn refeed_is_duplicate() {
        let mut buf = reliable();
        assert_eq!(
            buf.feed(&frag(0, 0, 2, b"a"), 0).unwrap(),
            FeedOutcome::Pending
        );
        assert_eq!(
            buf.feed(&frag(0, 0, 2, b"a"), 0).unwrap(),
            FeedOutcome::Duplicate
        );
        assert!(matches!(
            buf.feed(&frag(0, 1, 2, b"b"), 0).unwrap(),
            FeedOutcome::Complete(_)
        ));
        assert_eq!(
            buf.feed(&frag(0, 1, 2, b"b"), 0).unwrap(),
            FeedOutcome::Duplicate
        );
        assert_eq!(buf.incomplete_count(), 0);
    }

    #[test]
    fn inconsistent_frag_count_is_error() {
        let mut buf = reliable();
        buf.feed(&frag(0, 0, 3, b"a"), 0).unwrap();
        assert!(matches!(
            buf.feed(&frag(0, 1, 4, b"b"), 0),
            Err(ReassemblyError::FragCountMismatch { .. })
        ));
    }

    #[test]
    fn nack_lists_missing_fragment() {
        let mut buf = reliable();
        buf.feed(&frag(0, 0, 3, b"a"), 0).unwrap();
        buf.feed(&frag(0, 2, 3, b"c"), 0).unwrap();
        assert!(
            buf.repair_round(1_000_000).is_empty(),
            "younger than interval"
        );
        let nacks = buf.repair_round(5_000_000);
        assert_eq!(nacks.len(), 1);
        assert_eq!(nacks[0].missing_bitmap, vec![0b010]);
        assert_eq!(nacks[0].missing_indices(3), vec![1]);
    }

    #[test]
    fn complete_buffer_sends_nothing() {
        let mut buf = reliable();
        buf.feed(&frag(0, 0, 1, b"a"), 0).unwrap();
        assert!(buf.repair_round(u64::MAX).is_empty());
    }

    #[test]
    fn abandoned_after_max_rounds() {
        let mut buf = reliable();
        buf.feed(&frag(0, 0, 2, b"a"), 0).unwrap();
        let interval = 5_000_000;
        let mut rounds_with_nack = 0;
        for round in 1..=20u64 {
            let nacks = buf.repair_round(round * interval);
            if !nacks.is_empty() {
                rounds_with_nack += 1;
                assert!(round <= 10);
            }
        }
        assert_eq!(rounds_with_nack, 10);
        assert_eq!(buf.take_abandoned().len(), 1);
        // late repair of an abandoned message is ignored
        assert_eq!(
            buf.feed(&frag(0, 1, 2, b"b"), 0).unwrap(),
            FeedOutcome::Duplicate
        );
    }

    #[test]
    fn gaps_and_heartbeats_expose_unseen_messages() {
        let mut buf = reliable();
        buf.feed(&frag(2, 0, 1, b"c"), 0).unwrap();
        let key = StreamKey {
            topic_id: 0,
            publisher_id: 1,
        };
        buf.note_heartbeat(key, 4, 3, 0);
        let nacks = buf.repair_round(5_000_000);
        let seqs: Vec<_> = nacks.iter().map(|n| n.seq).collect();
        assert_eq!(seqs, vec![0, 1, 3, 4]);
        assert_eq!(nacks[0].frag_count, 0);
        assert!(nacks[0].missing_bitmap.is_empty());
        assert_eq!(nacks[3].frag_count, 3);
        assert_eq!(nacks[3].missing_indices(3), vec![0, 1, 2]);
    }

    #[test]
    fn best_effort_bounds_incomplete_messages() {
        let mut buf = ReassemblyBuffer::new(ReassemblyPolicy::best_effort());
        for seq in 0..20 {
            buf.feed(&frag(seq, 0, 2, b"a"), 0).unwrap();
        }
        assert_eq!(buf.incomplete_count(), 8);
        assert_eq!(buf.take_abandoned().len(), 12);
        assert!(buf.repair_round(u64::MAX).iter().all(|n| n.seq >= 12));
    }
}
