//! Per-subscriber FIFO with an optional bound.

use alloc::collections::VecDeque;
use core::num::NonZeroUsize;

use crate::envelope::MessageEnvelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("queue capacity must be positive")]
pub struct CapacityError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Capacity {
    #[default]
    Unbounded,
    Bounded(NonZeroUsize),
}

impl Capacity {
    pub fn bounded(n: usize) -> Result<Self, CapacityError> {
        NonZeroUsize::new(n)
            .map(Capacity::Bounded)
            .ok_or(CapacityError)
    }

    pub fn limit(self) -> Option<usize> {
        match self {
            Capacity::Unbounded => None,
            Capacity::Bounded(n) => Some(n.get()),
        }
    }
}

/// What a bounded queue does when a new envelope arrives and it is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DropPolicy {
    /// The publisher waits until the subscriber makes room.
    #[default]
    Block,
    /// Evict the head so the newest envelope always gets in.
    DropOldest,
    /// Keep the queue as is and refuse the new envelope.
    RejectNew,
}

#[derive(Debug)]
pub enum PushOutcome {
    Accepted,
    /// Accepted after evicting the returned head.
    Evicted(MessageEnvelope),
    Rejected(MessageEnvelope),
    /// Full under [`DropPolicy::Block`]; the envelope is handed back.
    WouldBlock(MessageEnvelope),
}

#[derive(Debug)]
pub struct SubscriberQueue {
    items: VecDeque<MessageEnvelope>,
    capacity: Capacity,
    policy: DropPolicy,
}

impl SubscriberQueue {
    pub fn new(capacity: Capacity, policy: DropPolicy) -> Self {
        Self {
            items: VecDeque::new(),
            capacity,
            policy,
        }
    }

    pub fn is_full(&self) -> bool {
        self.capacity
            .limit()
            .is_some_and(|limit| self.items.len() >= limit)
    }

    /// True when a push right now would have to wait.
    pub fn would_block(&self) -> bool {
        self.policy == DropPolicy::Block && self.is_full()
    }

    pub fn push(&mut self, envelope: MessageEnvelope) -> PushOutcome {
        if !self.is_full() {
            self.items.push_back(envelope);
            return PushOutcome::Accepted;
        }
        match self.policy {
            DropPolicy::Block => PushOutcome::WouldBlock(envelope),
            DropPolicy::RejectNew => PushOutcome::Rejected(envelope),
            DropPolicy::DropOldest => {
                // capacity is at least one, so a full queue has a head
                let old = self.items.pop_front().expect("full queue has a head");
                self.items.push_back(envelope);
                PushOutcome::Evicted(old)
            }
        }
    }

    pub fn pop(&mut self) -> Option<MessageEnvelope> {
        self.items.pop_front()
    }

    pub fn peek(&self) -> Option<&MessageEnvelope> {
        self.items.front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clear(&mut self) -> usize {
        let n = self.items.len();
        self.items.clear();
        n
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    pub fn policy(&self) -> DropPolicy {
        self.policy
    }

    pub fn iter(&self) -> impl Iterator<Item = &MessageEnvelope> {
        self.items.iter()
    }
}
