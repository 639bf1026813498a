//! Message body layout: a fixed header followed by the raw payload bytes.

use thiserror::Error;

pub const MESSAGE_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageHeader {
    pub seq: u32,
    pub publish_ts_ns: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("serialized message of {0} bytes is shorter than its header")]
pub struct TruncatedMessage(pub usize);

impl MessageHeader {
    pub fn to_bytes(self) -> [u8; MESSAGE_HEADER_LEN] {
        let mut out = [0u8; MESSAGE_HEADER_LEN];
        out[..4].copy_from_slice(&self.seq.to_le_bytes());
        out[4..].copy_from_slice(&self.publish_ts_ns.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TruncatedMessage> {
        if bytes.len() < MESSAGE_HEADER_LEN {
            return Err(TruncatedMessage(bytes.len()));
        }
        Ok(MessageHeader {
            seq: u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")),
            publish_ts_ns: u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")),
        })
    }
}

/// Copies the payload behind its header. The copy is deliberate: its cost
/// grows with payload size exactly as a real serializer's would.
pub fn serialize(header: MessageHeader, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(MESSAGE_HEADER_LEN + payload.len());
    out.extend_from_slice(&header.to_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn deserialize(bytes: &[u8]) -> Result<(MessageHeader, &[u8]), TruncatedMessage> {
    let header = MessageHeader::from_bytes(bytes)?;
    Ok((header, &bytes[MESSAGE_HEADER_LEN..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn length_is_header_plus_payload() {
        let h = MessageHeader {
            seq: 1,
            publish_ts_ns: 2,
        };
        for n in [0usize, 16, 65_536, 2_097_152] {
            assert_eq!(serialize(h, &vec![7u8; n]).len(), MESSAGE_HEADER_LEN + n);
        }
        assert_eq!(deserialize(&[0u8; 11]), Err(TruncatedMessage(11)));
    }

    proptest! {
        #[test]
        fn roundtrip(seq: u32, ts: u64, payload in proptest::collection::vec(any::<u8>(), 0..512)) {
            let h = MessageHeader { seq, publish_ts_ns: ts };
            let bytes = serialize(h, &payload);
            let (h2, body) = deserialize(&bytes).unwrap();
            prop_assert_eq!(h2, h);
            prop_assert_eq!(body, &payload[..]);
        }
    }
}
