use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

/// Process-unique identity of a constructed [`Payload`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InstanceId(u64);

impl InstanceId {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Immutable message content.
///
/// A payload is built once and then only read. Publishing moves it behind an
/// `Arc`, and every subscriber of the topic receives a clone of that same
/// `Arc`, so the instance id seen on the receiving side equals the one the
/// publisher constructed. There is deliberately no `Clone`: a second copy of
/// the bytes must go through [`Payload::deep_copy`] and gets a new id.
pub struct Payload {
    id: InstanceId,
    bytes: Box<[u8]>,
}

impl Payload {
    pub fn new(bytes: impl Into<Box<[u8]>>) -> Self {
        let id = InstanceId(NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed));
        Self {
            id,
            bytes: bytes.into(),
        }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn instance_id(&self) -> InstanceId {
        self.id
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Copies the bytes into a fresh payload with its own instance id.
    pub fn deep_copy(&self) -> Payload {
        Payload::new(self.bytes.to_vec())
    }
}

impl AsRef<[u8]> for Payload {
    fn as_ref(&self) -> &[u8] {
        &self.bytes
    }
}

impl From<Vec<u8>> for Payload {
    fn from(bytes: Vec<u8>) -> Self {
        Payload::new(bytes)
    }
}

impl From<&[u8]> for Payload {
    fn from(bytes: &[u8]) -> Self {
        Payload::new(bytes.to_vec())
    }
}

impl fmt::Debug for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payload")
            .field("id", &self.id)
            .field("len", &self.bytes.len())
            .finish()
    }
}
