use alloc::sync::Arc;

use crate::clock::Timestamp;
use crate::payload::Payload;
use crate::topic::TopicName;

/// One published message as seen by a subscriber.
///
/// `seq` is assigned by the registry when the publish is accepted and
/// `publish_ts` is read from the bus clock at that moment. The payload is
/// shared, never copied.
#[derive(Debug, Clone)]
pub struct MessageEnvelope {
    pub topic: TopicName,
    pub seq: u64,
    pub publish_ts: Timestamp,
    pub payload: Arc<Payload>,
}

impl MessageEnvelope {
    pub fn new(topic: TopicName, seq: u64, publish_ts: Timestamp, payload: Arc<Payload>) -> Self {
        Self {
            topic,
            seq,
            publish_ts,
            payload,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        self.payload.as_bytes()
    }

    /// Same envelope with the payload bytes duplicated into a new instance.
    pub fn deep_copied(&self) -> Self {
        Self {
            topic: self.topic.clone(),
            seq: self.seq,
            publish_ts: self.publish_ts,
            payload: Arc::new(self.payload.deep_copy()),
        }
    }
}
