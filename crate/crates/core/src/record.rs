//! Binary log record codec.
//!
//! Layout, all integers little-endian, no padding:
//!
//! | offset | size | field          |
//! |--------|------|----------------|
//! | 0      | 4    | magic `FCL1`   |
//! | 4      | 1    | version (1)    |
//! | 5      | 2    | topic_len u16  |
//! | 7      | 8    | seq u64        |
//! | 15     | 8    | publish_ts i64 |
//! | 23     | 4    | payload_len u32|
//! | 27     | ..   | topic bytes    |
//! | ..     | ..   | payload bytes  |
//!
//! A log file is these records back to back with no file header.

use alloc::vec::Vec;
use core::str;

use crate::clock::Timestamp;
use crate::envelope::MessageEnvelope;
use crate::topic::{TopicError, TopicName};

pub const MAGIC: [u8; 4] = *b"FCL1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 27;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported record version {0}")]
    UnsupportedVersion(u8),
    #[error("record truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("invalid topic in record: {0}")]
    InvalidTopic(TopicError),
    #[error("topic bytes are not UTF-8")]
    TopicNotUtf8,
}

/// Decoded fixed-size prefix of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordHeader {
    pub topic_len: u16,
    pub seq: u64,
    pub publish_ts_ns: i64,
    pub payload_len: u32,
}

impl RecordHeader {
    pub fn record_len(&self) -> usize {
        HEADER_LEN + self.topic_len as usize + self.payload_len as usize
    }

    pub fn decode(buf: &[u8]) -> Result<Self, DecodeError> {
        let n = buf.len().min(4);
        if buf[..n] != MAGIC[..n] {
            let mut magic = [0u8; 4];
            magic[..n].copy_from_slice(&buf[..n]);
            return Err(DecodeError::BadMagic(magic));
        }
        if buf.len() > 4 && buf[4] != VERSION {
            return Err(DecodeError::UnsupportedVersion(buf[4]));
        }
        if buf.len() < HEADER_LEN {
            return Err(DecodeError::Truncated {
                needed: HEADER_LEN,
                available: buf.len(),
            });
        }
        Ok(Self {
            topic_len: u16::from_le_bytes([buf[5], buf[6]]),
            seq: u64::from_le_bytes(buf[7..15].try_into().unwrap()),
            publish_ts_ns: i64::from_le_bytes(buf[15..23].try_into().unwrap()),
            payload_len: u32::from_le_bytes(buf[23..27].try_into().unwrap()),
        })
    }
}

/// One record as read back from a log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub topic: TopicName,
    pub seq: u64,
    pub publish_ts_ns: i64,
    pub payload: Vec<u8>,
}

impl LogRecord {
    pub fn from_envelope(envelope: &MessageEnvelope) -> Self {
        Self {
            topic: envelope.topic.clone(),
            seq: envelope.seq,
            publish_ts_ns: envelope.publish_ts.as_nanos(),
            payload: envelope.bytes().to_vec(),
        }
    }

    pub fn publish_ts(&self) -> Timestamp {
        Timestamp::from_nanos(self.publish_ts_ns)
    }

    /// Field-wise comparison against an envelope, payload by bytes.
    pub fn matches(&self, envelope: &MessageEnvelope) -> bool {
        self.topic == envelope.topic
            && self.seq == envelope.seq
            && self.publish_ts_ns == envelope.publish_ts.as_nanos()
            && self.payload == envelope.bytes()
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.topic.len() + self.payload.len()
    }
}

/// The fixed 27-byte prefix for `envelope`.
pub fn encode_header(envelope: &MessageEnvelope) -> [u8; HEADER_LEN] {
    let payload_len = u32::try_from(envelope.payload.len()).expect("payload over 4 GiB");
    // TopicName caps the length at 255
    let topic_len = envelope.topic.len() as u16;
    let mut out = [0u8; HEADER_LEN];
    out[0..4].copy_from_slice(&MAGIC);
    out[4] = VERSION;
    out[5..7].copy_from_slice(&topic_len.to_le_bytes());
    out[7..15].copy_from_slice(&envelope.seq.to_le_bytes());
    out[15..23].copy_from_slice(&envelope.publish_ts.as_nanos().to_le_bytes());
    out[23..27].copy_from_slice(&payload_len.to_le_bytes());
    out
}

pub fn encode_into(envelope: &MessageEnvelope, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + envelope.topic.len() + envelope.payload.len());
    out.extend_from_slice(&encode_header(envelope));
    out.extend_from_slice(envelope.topic.as_bytes());
    out.extend_from_slice(envelope.bytes());
}

pub fn encode_record(envelope: &MessageEnvelope) -> Vec<u8> {
    let mut out = Vec::new();
    encode_into(envelope, &mut out);
    out
}

/// Decodes the record at the head of `buf`, returning it and the number of
/// bytes it occupied. Trailing bytes are left alone.
pub fn decode_record(buf: &[u8]) -> Result<(LogRecord, usize), DecodeError> {
    let header = RecordHeader::decode(buf)?;
    let total = header.record_len();
    if buf.len() < total {
        return Err(DecodeError::Truncated {
            needed: total,
            available: buf.len(),
        });
    }
    let topic_end = HEADER_LEN + header.topic_len as usize;
    let record = decode_body(&header, &buf[HEADER_LEN..topic_end], &buf[topic_end..total])?;
    Ok((record, total))
}

/// Builds a record from a header and its already-split variable parts.
pub fn decode_body(
    header: &RecordHeader,
    topic: &[u8],
    payload: &[u8],
) -> Result<LogRecord, DecodeError> {
    let topic = str::from_utf8(topic).map_err(|_| DecodeError::TopicNotUtf8)?;
    let topic = TopicName::new(topic).map_err(DecodeError::InvalidTopic)?;
    Ok(LogRecord {
        topic,
        seq: header.seq,
        publish_ts_ns: header.publish_ts_ns,
        payload: payload.to_vec(),
    })
}
