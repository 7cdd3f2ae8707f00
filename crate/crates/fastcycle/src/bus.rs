//! The shared message bus: topic registry plus the signals the broker waits on.
//!
//! A [`Bus`] is cheap to clone and every clone refers to the same registry.
//! Publishing only appends envelope handles to subscriber queues under the
//! registry lock; callbacks run later on broker workers, never under it.

use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard, PoisonError};
use std::time::{Duration, Instant};

use fastcycle_core::registry::RegistryCounters;
use fastcycle_core::{
    Clock, MessageEnvelope, Payload, PublishError, PublishReceipt, Scope, SubscribeError,
    SubscribeOptions, SubscriberId, Timestamp, TopicError, TopicName, TopicRegistry,
};

use crate::broker::DispatchState;
use crate::clock::MonotonicClock;

/// Failure reported by a subscriber or serve callback.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct CallbackError(pub String);

impl CallbackError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl From<String> for CallbackError {
    fn from(value: String) -> Self {
        Self(value)
    }
}

impl From<&str> for CallbackError {
    fn from(value: &str) -> Self {
        Self(value.to_owned())
    }
}

pub type CallbackResult = Result<(), CallbackError>;

pub type Callback = Arc<dyn Fn(&MessageEnvelope) -> CallbackResult + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BusError {
    #[error("bus is shutting down and no longer accepts publishes")]
    Closed,
    #[error(transparent)]
    InvalidTopicName(#[from] TopicError),
}

/// Snapshot of one topic record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicInfo {
    pub name: TopicName,
    pub next_seq: u64,
    pub subscribers: Vec<SubscriberId>,
}

/// Snapshot of one subscription's queue counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubscriberStats {
    pub queued: usize,
    pub accepted: u64,
    pub dropped: u64,
    pub in_flight: bool,
}

pub(crate) struct BusState {
    pub(crate) registry: TopicRegistry<Callback>,
    pub(crate) accepting: bool,
    pub(crate) dispatch: DispatchState,
}

pub(crate) struct Shared {
    pub(crate) state: Mutex<BusState>,
    /// Wakes the broker scan loop.
    pub(crate) work: Condvar,
    /// Signalled when queue space frees up or a task finishes.
    pub(crate) progress: Condvar,
    pub(crate) clock: Arc<dyn Clock>,
}

impl Shared {
    pub(crate) fn lock(&self) -> MutexGuard<'_, BusState> {
        self.state.lock().unwrap_or_else(PoisonError::into_inner)
    }
}

#[derive(Clone)]
pub struct Bus {
    pub(crate) shared: Arc<Shared>,
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let state = self.shared.lock();
        f.debug_struct("Bus")
            .field("topics", &state.registry.topic_count())
            .field("subscribers", &state.registry.subscriber_count())
            .field("accepting", &state.accepting)
            .finish()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self::with_clock(Arc::new(MonotonicClock::new()))
    }

    /// A bus whose envelopes are stamped by `clock`.
    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Self {
            shared: Arc::new(Shared {
                state: Mutex::new(BusState {
                    registry: TopicRegistry::new(),
                    accepting: true,
                    dispatch: DispatchState::default(),
                }),
                work: Condvar::new(),
                progress: Condvar::new(),
                clock,
            }),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.shared.clock
    }

    pub fn now(&self) -> Timestamp {
        self.shared.clock.now()
    }

    /// Creates `name` if it does not exist yet. Existing topics are left as is.
    pub fn create_topic(&self, name: &str) -> Result<TopicInfo, TopicError> {
        let name = TopicName::new(name)?;
        let mut state = self.shared.lock();
        let record = state.registry.create_topic(&name);
        Ok(TopicInfo {
            next_seq: record.next_seq(),
            subscribers: record.subscribers().to_vec(),
            name,
        })
    }

    pub fn topic_info(&self, name: &str) -> Option<TopicInfo> {
        let key = TopicName::new(name).ok()?;
        let state = self.shared.lock();
        let record = state.registry.topic(name)?;
        Some(TopicInfo {
            name: key,
            next_seq: record.next_seq(),
            subscribers: record.subscribers().to_vec(),
        })
    }

    pub fn topic_count(&self) -> usize {
        self.shared.lock().registry.topic_count()
    }

    /// Registers `callback` for `topic`, creating the topic if needed.
    pub fn subscribe<F>(
        &self,
        topic: &str,
        options: SubscribeOptions,
        callback: F,
    ) -> Result<SubscriberId, SubscribeError>
    where
        F: Fn(&MessageEnvelope) -> CallbackResult + Send + Sync + 'static,
    {
        let topic = TopicName::new(topic)?;
        Ok(self.subscribe_scope(Scope::Topic(topic), options, Arc::new(callback)))
    }

    /// Registers `callback` for every topic, present and future.
    pub fn subscribe_all<F>(&self, options: SubscribeOptions, callback: F) -> SubscriberId
    where
        F: Fn(&MessageEnvelope) -> CallbackResult + Send + Sync + 'static,
    {
        self.subscribe_scope(Scope::All, options, Arc::new(callback))
    }

    pub fn subscribe_scope(
        &self,
        scope: Scope,
        options: SubscribeOptions,
        callback: Callback,
    ) -> SubscriberId {
        let mut state = self.shared.lock();
        state.registry.subscribe(scope, options, callback)
    }

    /// Removes a subscription and discards its queued envelopes.
    pub fn unsubscribe(&self, id: SubscriberId) -> bool {
        let removed = self.shared.lock().registry.unsubscribe(id);
        if removed {
            self.shared.progress.notify_all();
        }
        removed
    }

    /// Publishes `payload` on `topic`.
    ///
    /// The payload handle is shared with every subscriber queue. When a
    /// subscriber with the blocking drop policy has a full queue this waits
    /// until it has room.
    pub fn publish(
        &self,
        topic: &TopicName,
        payload: impl Into<Arc<Payload>>,
    ) -> Result<PublishReceipt, BusError> {
        let payload = payload.into();
        let mut state = self.shared.lock();
        loop {
            if !state.accepting {
                return Err(BusError::Closed);
            }
            // stamped under the lock so seq order and timestamp order agree
            let now = self.shared.clock.now();
            match state.registry.publish(topic, Arc::clone(&payload), now) {
                Ok(receipt) => {
                    drop(state);
                    if receipt.delivered_to > 0 {
                        self.shared.work.notify_one();
                    }
                    return Ok(receipt);
                }
                Err(PublishError::WouldBlock { .. }) => {
                    state = self
                        .shared
                        .progress
                        .wait(state)
                        .unwrap_or_else(PoisonError::into_inner);
                }
            }
        }
    }

    /// Convenience for one-off publishes by topic text.
    pub fn publish_to(
        &self,
        topic: &str,
        payload: impl Into<Arc<Payload>>,
    ) -> Result<PublishReceipt, BusError> {
        let topic = TopicName::new(topic)?;
        self.publish(&topic, payload)
    }

    pub fn subscriber_stats(&self, id: SubscriberId) -> Option<SubscriberStats> {
        let state = self.shared.lock();
        state.registry.entry(id).map(|e| SubscriberStats {
            queued: e.queue().len(),
            accepted: e.accepted(),
            dropped: e.dropped(),
            in_flight: e.in_flight(),
        })
    }

    /// Envelopes queued and not yet handed to a worker.
    pub fn pending(&self) -> usize {
        self.shared.lock().registry.pending()
    }

    pub fn counters(&self) -> RegistryCounters {
        self.shared.lock().registry.counters()
    }

    pub fn is_accepting(&self) -> bool {
        self.shared.lock().accepting
    }

    /// Waits until nothing is queued and no callback or serve run is in
    /// progress. Returns false on timeout. Chains of callbacks that publish
    /// keep the bus busy, so this returns only once they have settled.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut state = self.shared.lock();
        loop {
            if state.registry.pending() == 0 && !state.dispatch.busy() {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            state = self
                .shared
                .progress
                .wait_timeout(state, deadline - now)
                .unwrap_or_else(PoisonError::into_inner)
                .0;
        }
    }
}
