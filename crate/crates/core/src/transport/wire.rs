//! Datagram framing.
//!
//! Every datagram starts with a fixed 29-byte little-endian header:
//!
//! ```text
//! offset size field
//!      0    4 magic "PBW1"
//!      4    1 packet_type (0 DATA, 1 NACK, 2 HEARTBEAT)
//!      5    2 topic_id
//!      7    2 publisher_id
//!      9    4 seq
//!     13    2 frag_index
//!     15    2 frag_count
//!     17    8 publish_ts_ns
//!     25    4 payload_len
//!     29    - payload
//! ```
//!
//! DATA packets carry one fragment of a message body. NACK packets carry the
//! missing-fragment bitmap of one message. HEARTBEAT packets announce the
//! publisher's latest sequence number and have an empty payload.

use bytes::{BufMut, Bytes};
use thiserror::Error;

use crate::model::{NodeId, TopicId};

pub const MAGIC: [u8; 4] = *b"PBW1";
pub const HEADER_LEN: usize = 4 + 1 + 2 + 2 + 4 + 2 + 2 + 8 + 4;
/// Largest UDP payload over IPv4.
pub const MAX_UDP_DATAGRAM: usize = 65_507;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("truncated input: {0} bytes, header needs {HEADER_LEN}")]
    Truncated(usize),
    #[error("payload_len mismatch: header says {declared}, datagram carries {actual}")]
    PayloadLenMismatch { declared: u32, actual: usize },
    #[error("unknown packet type {0}")]
    UnknownPacketType(u8),
    #[error("fragment index {index} out of range for count {count}")]
    FragmentOutOfRange { index: u16, count: u16 },
    #[error("payload of {0} bytes does not fit a 32-bit length")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum PacketType {
    Data = 0,
    Nack = 1,
    Heartbeat = 2,
}

impl PacketType {
    fn from_u8(v: u8) -> Result<Self, WireError> {
        match v {
            0 => Ok(PacketType::Data),
            1 => Ok(PacketType::Nack),
            2 => Ok(PacketType::Heartbeat),
            other => Err(WireError::UnknownPacketType(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WirePacket {
    pub packet_type: PacketType,
    pub topic_id: TopicId,
    pub publisher_id: NodeId,
    pub seq: u32,
    pub frag_index: u16,
    pub frag_count: u16,
    pub publish_ts_ns: u64,
    pub payload: Bytes,
}

impl WirePacket {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    /// DATA packets need `frag_index < frag_count`; control packets use index 0.
    pub fn check(&self) -> Result<(), WireError> {
        let ok = match self.packet_type {
            PacketType::Data => self.frag_index < self.frag_count,
            PacketType::Nack | PacketType::Heartbeat => self.frag_index == 0,
        };
        if !ok {
            return Err(WireError::FragmentOutOfRange {
                index: self.frag_index,
                count: self.frag_count,
            });
        }
        if u32::try_from(self.payload.len()).is_err() {
            return Err(WireError::PayloadTooLarge(self.payload.len()));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Bytes, WireError> {
        self.check()?;
        let mut buf = Vec::with_capacity(self.encoded_len());
        self.put_header(&mut buf, self.payload.len() as u32);
        buf.extend_from_slice(&self.payload);
        Ok(Bytes::from(buf))
    }

    fn put_header(&self, buf: &mut Vec<u8>, payload_len: u32) {
        buf.put_slice(&MAGIC);
        buf.put_u8(self.packet_type as u8);
        buf.put_u16_le(self.topic_id);
        buf.put_u16_le(self.publisher_id);
        buf.put_u32_le(self.seq);
        buf.put_u16_le(self.frag_index);
        buf.put_u16_le(self.frag_count);
        buf.put_u64_le(self.publish_ts_ns);
        buf.put_u32_le(payload_len);
    }

    /// Decodes a datagram; the payload shares the input buffer.
    pub fn decode(datagram: &Bytes) -> Result<WirePacket, WireError> {
        if datagram.len() < HEADER_LEN {
            return Err(WireError::Truncated(datagram.len()));
        }
        let h = &datagram[..HEADER_LEN];
        if h[0..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        let u16_at = |o: usize| u16::from_le_bytes([h[o], h[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(h[o..o + 4].try_into().unwrap());
        let packet_type = PacketType::from_u8(h[4])?;
        let declared = u32_at(25);
        let actual = datagram.len() - HEADER_LEN;
        if declared as usize != actual {
            return Err(WireError::PayloadLenMismatch { declared, actual });
        }
        let packet = WirePacket {
            packet_type,
            topic_id: u16_at(5),
            publisher_id: u16_at(7),
            seq: u32_at(9),
            frag_index: u16_at(13),
            frag_count: u16_at(15),
            publish_ts_ns: u64::from_le_bytes(h[17..25].try_into().unwrap()),
            payload: datagram.slice(HEADER_LEN..),
        };
        packet.check()?;
        Ok(packet)
    }
}

/// Reads the packet type of a datagram without decoding the rest.
pub fn peek_type(datagram: &[u8]) -> Option<PacketType> {
    if datagram.len() < HEADER_LEN || datagram[0..4] != MAGIC {
        return None;
    }
    PacketType::from_u8(datagram[4]).ok()
}

/// Negative acknowledgment: which fragments of one message are still missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NackRecord {
    pub topic_id: TopicId,
    pub publisher_id: NodeId,
    pub seq: u32,
    /// Zero when the receiver never saw a fragment of this message.
    pub frag_count: u16,
    /// Bit `i` (LSB-first within each byte) set when fragment `i` is missing.
    /// Empty means "resend everything".
    pub missing_bitmap: Vec<u8>,
}

impl NackRecord {
    pub fn from_missing(
        topic_id: TopicId,
        publisher_id: NodeId,
        seq: u32,
        frag_count: u16,
        missing: impl IntoIterator<Item = u16>,
    ) -> Self {
        let mut bitmap = vec![0u8; (frag_count as usize).div_ceil(8)];
        for i in missing {
            bitmap[i as usize / 8] |= 1 << (i % 8);
        }
        NackRecord {
            topic_id,
            publisher_id,
            seq,
            frag_count,
            missing_bitmap: bitmap,
        }
    }

    /// Requests every fragment of a message the receiver knows only by sequence number.
    pub fn whole_message(topic_id: TopicId, publisher_id: NodeId, seq: u32) -> Self {
        NackRecord {
            topic_id,
            publisher_id,
            seq,
            frag_count: 0,
            missing_bitmap: Vec::new(),
        }
    }

    pub fn is_missing(&self, index: u16) -> bool {
        if self.missing_bitmap.is_empty() {
            return true;
        }
        self.missing_bitmap
            .get(index as usize / 8)
            .is_some_and(|b| b & (1 << (index % 8)) != 0)
    }

    /// Missing fragment indices given the message's real fragment count.
    pub fn missing_indices(&self, frag_count: u16) -> Vec<u16> {
        (0..frag_count).filter(|&i| self.is_missing(i)).collect()
    }

    pub fn to_packet(&self) -> WirePacket {
        WirePacket {
            packet_type: PacketType::Nack,
            topic_id: self.topic_id,
            publisher_id: self.publisher_id,
            seq: self.seq,
            frag_index: 0,
            frag_count: self.frag_count,
            publish_ts_ns: 0,
            payload: Bytes::from(self.missing_bitmap.clone()),
        }
    }

    pub fn from_packet(packet: &WirePacket) -> Option<Self> {
        (packet.packet_type == PacketType::Nack).then(|| NackRecord {
            topic_id: packet.topic_id,
            publisher_id: packet.publisher_id,
            seq: packet.seq,
            frag_count: packet.frag_count,
            missing_bitmap: packet.payload.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn data(payload: &[u8]) -> WirePacket {
        WirePacket {
            packet_type: PacketType::Data,
            topic_id: 3,
            publisher_id: 7,
            seq: 42,
            frag_index: 1,
            frag_count: 4,
            publish_ts_ns: 123_456_789,
            payload: Bytes::copy_from_slice(payload),
        }
    }

    #[test]
    fn header_is_29_bytes() {
        assert_eq!(HEADER_LEN, 29);
        assert_eq!(data(&[]).encode().unwrap().len(), 29);
    }

    #[test]
    fn field_layout_is_little_endian() {
        let bytes = data(&[0xAA]).encode().unwrap();
        assert_eq!(&bytes[0..4], b"PBW1");
        assert_eq!(bytes[4], 0);
        assert_eq!(&bytes[5..7], &[3, 0]);
        assert_eq!(&bytes[7..9], &[7, 0]);
        assert_eq!(&bytes[9..13], &[42, 0, 0, 0]);
        assert_eq!(&bytes[13..15], &[1, 0]);
        assert_eq!(&bytes[15..17], &[4, 0]);
        assert_eq!(&bytes[17..25], &123_456_789u64.to_le_bytes());
        assert_eq!(&bytes[25..29], &[1, 0, 0, 0]);
        assert_eq!(bytes[29], 0xAA);
    }

    #[test]
    fn decode_errors() {
        let good = data(b"xyz").encode().unwrap();
        let mut bad = good.to_vec();
        bad[0] = b'X';
        assert_eq!(
            WirePacket::decode(&Bytes::from(bad)).unwrap_err(),
            WireError::BadMagic
        );
        assert_eq!(
            WirePacket::decode(&good.slice(..10)).unwrap_err(),
            WireError::Truncated(10)
        );
        assert_eq!(
            WirePacket::decode(&good.slice(..good.len() - 1)).unwrap_err(),
            WireError::PayloadLenMismatch {
                declared: 3,
                actual: 2
            }
        );
        let mut bad_type = good.to_vec();
        bad_type[4] = 9;
        assert_eq!(
            WirePacket::decode(&Bytes::from(bad_type)).unwrap_err(),
            WireError::UnknownPacketType(9)
        );
    }

    #[test]
    fn fragment_index_must_be_in_range() {
        let mut p = data(b"");
        p.frag_index = 4;
        assert!(p.encode().is_err());
    }

    #[test]
    fn nack_bitmap() {
        let nack = NackRecord::from_missing(1, 2, 3, 3, [1]);
        assert_eq!(nack.missing_bitmap, vec![0b010]);
        assert_eq!(nack.missing_indices(3), vec![1]);
        let back = WirePacket::decode(&nack.to_packet().encode().unwrap()).unwrap();
        assert_eq!(NackRecord::from_packet(&back).unwrap(), nack);
        let all = NackRecord::whole_message(1, 2, 3);
        assert_eq!(all.missing_indices(5), vec![0, 1, 2, 3, 4]);
    }

    fn arb_packet() -> impl Strategy<Value = WirePacket> {
        (
            0u8..3,
            any::<u16>(),
            any::<u16>(),
            any::<u32>(),
            1u16..=u16::MAX,
            any::<u16>(),
            any::<u64>(),
            proptest::collection::vec(any::<u8>(), 0..512),
        )
            .prop_map(|(t, topic, publisher, seq, count, idx, ts, payload)| {
                let packet_type = PacketType::from_u8(t).unwrap();
                let frag_index = match packet_type {
                    PacketType::Data => idx % count,
                    _ => 0,
                };
                WirePacket {
                    packet_type,
                    topic_id: topic,
                    publisher_id: publisher,
                    seq,
                    frag_index,
                    frag_count: count,
                    publish_ts_ns: ts,
                    payload: Bytes::from(payload),
                }
            })
    }

    proptest! {
        #[test]
        fn roundtrip(p in arb_packet()) {
            let bytes = p.encode().unwrap();
            prop_assert_eq!(bytes.len(), HEADER_LEN + p.payload.len());
            prop_assert_eq!(WirePacket::decode(&bytes).unwrap(), p);
        }
    }
}
