//! Topic registry: topic records, subscriptions and the publish fan-out.
//!
//! The registry is a plain single-owner structure. The broker wraps it in a
//! lock; everything here assumes exclusive access through `&mut self`.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::clock::Timestamp;
use crate::envelope::MessageEnvelope;
use crate::payload::Payload;
use crate::queue::{Capacity, CapacityError, DropPolicy, PushOutcome, SubscriberQueue};
use crate::topic::{TopicError, TopicName};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubscriberId(u64);

impl SubscriberId {
    pub fn get(self) -> u64 {
        self.0
    }
}

impl fmt::Display for SubscriberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sub-{}", self.0)
    }
}

/// Which publishes a subscription receives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Topic(TopicName),
    /// Every topic, including ones created after subscribing.
    All,
}

/// How the payload reaches the callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delivery {
    /// The callback gets the publisher's payload handle.
    #[default]
    ZeroCopy,
    /// The bytes are duplicated into a new payload before the callback runs.
    /// Only useful as a benchmark baseline.
    DeepCopy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SubscribeOptions {
    pub capacity: Capacity,
    pub drop_policy: DropPolicy,
    pub delivery: Delivery,
}

impl SubscribeOptions {
    pub fn unbounded() -> Self {
        Self::default()
    }

    /// `capacity == 0` is rejected.
    pub fn bounded(capacity: usize, drop_policy: DropPolicy) -> Result<Self, CapacityError> {
        Ok(Self {
            capacity: Capacity::bounded(capacity)?,
            drop_policy,
            delivery: Delivery::ZeroCopy,
        })
    }

    pub fn with_delivery(mut self, delivery: Delivery) -> Self {
        self.delivery = delivery;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SubscribeError {
    #[error("invalid topic name: {0}")]
    InvalidTopicName(#[from] TopicError),
    #[error(transparent)]
    InvalidCapacity(#[from] CapacityError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PublishError {
    /// A subscriber with [`DropPolicy::Block`] has a full queue. Nothing was
    /// appended anywhere and the sequence number was not consumed.
    #[error("subscriber {subscriber} queue is full")]
    WouldBlock { subscriber: SubscriberId },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicRecord {
    next_seq: u64,
    subscribers: Vec<SubscriberId>,
}

impl TopicRecord {
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn subscribers(&self) -> &[SubscriberId] {
        &self.subscribers
    }
}

#[derive(Debug)]
pub struct SubscriptionEntry<C> {
    id: SubscriberId,
    scope: Scope,
    callback: C,
    queue: SubscriberQueue,
    delivery: Delivery,
    in_flight: bool,
    accepted: u64,
    dropped: u64,
}

impl<C> SubscriptionEntry<C> {
    pub fn id(&self) -> SubscriberId {
        self.id
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn queue(&self) -> &SubscriberQueue {
        &self.queue
    }

    pub fn in_flight(&self) -> bool {
        self.in_flight
    }

    /// Envelopes appended to this queue so far.
    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Envelopes lost to eviction or rejection.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Result of one accepted publish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishReceipt {
    pub seq: u64,
    pub publish_ts: Timestamp,
    /// Queues that now hold this envelope.
    pub delivered_to: usize,
    /// Older envelopes evicted by drop-oldest queues to make room.
    pub evicted: usize,
    /// Reject-new subscribers whose full queue refused this envelope.
    pub rejected: Vec<SubscriberId>,
}

/// A queue head handed out for execution. The subscriber stays marked in
/// flight until [`TopicRegistry::complete`] is called for it.
#[derive(Debug)]
pub struct ReadyTask<C> {
    pub subscriber: SubscriberId,
    pub envelope: MessageEnvelope,
    pub callback: C,
    pub delivery: Delivery,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegistryCounters {
    /// Accepted publish calls.
    pub published: u64,
    /// Sum of `delivered_to` over all publishes.
    pub appended: u64,
    /// Queue heads handed out by `take_ready`.
    pub taken: u64,
    /// Envelopes lost to eviction, rejection, unsubscribe or `clear_queues`.
    pub dropped: u64,
}

pub struct TopicRegistry<C> {
    topics: HashMap<TopicName, TopicRecord>,
    entries: BTreeMap<SubscriberId, SubscriptionEntry<C>>,
    wildcard: Vec<SubscriberId>,
    next_subscriber: u64,
    in_flight: usize,
    counters: RegistryCounters,
}

impl<C> Default for TopicRegistry<C> {
    fn default() -> Self {
        Self {
            topics: HashMap::new(),
            entries: BTreeMap::new(),
            wildcard: Vec::new(),
            next_subscriber: 1,
            in_flight: 0,
            counters: RegistryCounters::default(),
        }
    }
}

impl<C: Clone> TopicRegistry<C> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the record for `name`, creating an empty one if needed.
    pub fn create_topic(&mut self, name: &TopicName) -> &TopicRecord {
        self.topics.entry(name.clone()).or_default()
    }

    pub fn topic(&self, name: &str) -> Option<&TopicRecord> {
        self.topics.get(name)
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }

    pub fn topic_names(&self) -> impl Iterator<Item = &TopicName> {
        self.topics.keys()
    }

    pub fn subscribe(
        &mut self,
        scope: Scope,
        options: SubscribeOptions,
        callback: C,
    ) -> SubscriberId {
        let id = SubscriberId(self.next_subscriber);
        self.next_subscriber += 1;
        match &scope {
            Scope::Topic(name) => {
                self.topics
                    .entry(name.clone())
                    .or_default()
                    .subscribers
                    .push(id);
            }
            Scope::All => self.wildcard.push(id),
        }
        self.entries.insert(
            id,
            SubscriptionEntry {
                id,
                scope,
                callback,
                queue: SubscriberQueue::new(options.capacity, options.drop_policy),
                delivery: options.delivery,
                in_flight: false,
                accepted: 0,
                dropped: 0,
            },
        );
        id
    }

    /// Removes the subscription and discards whatever it still had queued.
    /// A callback already in flight is allowed to finish.
    pub fn unsubscribe(&mut self, id: SubscriberId) -> bool {
        let Some(mut entry) = self.entries.remove(&id) else {
            return false;
        };
        match &entry.scope {
            Scope::Topic(name) => {
                if let Some(record) = self.topics.get_mut(name.as_str()) {
                    record.subscribers.retain(|s| *s != id);
                }
            }
            Scope::All => self.wildcard.retain(|s| *s != id),
        }
        self.counters.dropped += entry.queue.clear() as u64;
        if entry.in_flight {
            self.in_flight -= 1;
        }
        true
    }

    pub fn entry(&self, id: SubscriberId) -> Option<&SubscriptionEntry<C>> {
        self.entries.get(&id)
    }

    pub fn subscriber_count(&self) -> usize {
        self.entries.len()
    }

    /// Appends one envelope to every queue subscribed to `topic`.
    ///
    /// Either the whole fan-out happens or, when a blocking queue is full,
    /// nothing does.
    pub fn publish(
        &mut self,
        topic: &TopicName,
        payload: Arc<Payload>,
        now: Timestamp,
    ) -> Result<PublishReceipt, PublishError> {
        let record = self.topics.entry(topic.clone()).or_default();
        for id in record.subscribers.iter().chain(self.wildcard.iter()) {
            if self.entries[id].queue.would_block() {
                return Err(PublishError::WouldBlock { subscriber: *id });
            }
        }

        let seq = record.next_seq;
        record.next_seq += 1;
        let envelope = MessageEnvelope::new(topic.clone(), seq, now, payload);

        let mut receipt = PublishReceipt {
            seq,
            publish_ts: now,
            delivered_to: 0,
            evicted: 0,
            rejected: Vec::new(),
        };
        for id in record.subscribers.iter().chain(self.wildcard.iter()) {
            let entry = self.entries.get_mut(id).expect("registered subscriber");
            match entry.queue.push(envelope.clone()) {
                PushOutcome::Accepted => {
                    receipt.delivered_to += 1;
                    entry.accepted += 1;
                }
                PushOutcome::Evicted(_) => {
                    receipt.delivered_to += 1;
                    receipt.evicted += 1;
                    entry.accepted += 1;
                    entry.dropped += 1;
                }
                PushOutcome::Rejected(_) => {
                    receipt.rejected.push(*id);
                    entry.dropped += 1;
                }
                PushOutcome::WouldBlock(_) => unreachable!("checked before fan-out"),
            }
        }

        self.counters.published += 1;
        self.counters.appended += receipt.delivered_to as u64;
        self.counters.dropped += (receipt.evicted + receipt.rejected.len()) as u64;
        Ok(receipt)
    }

    /// Pops the head of every queue whose subscriber is idle and marks those
    /// subscribers in flight. At most one task per subscriber is outstanding.
    pub fn take_ready(&mut self) -> Vec<ReadyTask<C>> {
        let mut ready = Vec::new();
        for entry in self.entries.values_mut() {
            if entry.in_flight {
                continue;
            }
            if let Some(envelope) = entry.queue.pop() {
                entry.in_flight = true;
                ready.push(ReadyTask {
                    subscriber: entry.id,
                    envelope,
                    callback: entry.callback.clone(),
                    delivery: entry.delivery,
                });
            }
        }
        self.in_flight += ready.len();
        self.counters.taken += ready.len() as u64;
        ready
    }

    /// Marks a task from [`take_ready`](Self::take_ready) finished. Returns
    /// false if the subscriber is gone or was not in flight.
    pub fn complete(&mut self, id: SubscriberId) -> bool {
        match self.entries.get_mut(&id) {
            Some(entry) if entry.in_flight => {
                entry.in_flight = false;
                self.in_flight -= 1;
                true
            }
            _ => false,
        }
    }

    /// Envelopes queued but not yet handed out.
    pub fn pending(&self) -> usize {
        self.entries.values().map(|e| e.queue.len()).sum()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn has_ready(&self) -> bool {
        self.entries
            .values()
            .any(|e| !e.in_flight && !e.queue.is_empty())
    }

    /// Empties every queue, counting the contents as dropped.
    pub fn clear_queues(&mut self) -> usize {
        let n: usize = self.entries.values_mut().map(|e| e.queue.clear()).sum();
        self.counters.dropped += n as u64;
        n
    }

    pub fn counters(&self) -> RegistryCounters {
        self.counters
    }
}
