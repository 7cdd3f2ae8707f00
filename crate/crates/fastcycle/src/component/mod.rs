//! Config-driven components and the runtime that hosts them.
//!
//! A component is created by a factory looked up by name, initialised with
//! its parameters, and declares its publishers and subscriptions from
//! [`Component::init`]. Subscriptions are only wired into the bus after init
//! succeeds, so no message reaches a component before it is initialised.
//!
//! All of a component's callbacks and its serve function go through one
//! mutex, so they never overlap. A component whose init, callback or serve
//! fails is marked failed and skipped from then on; the rest keep running.

mod manifest;
mod runtime;

use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::{Arc, Mutex};

use fastcycle_core::{
    MessageEnvelope, ParamError, ParamStore, Payload, PublishReceipt, SubscribeOptions, Timestamp,
    TopicError, TopicName,
};

use crate::bus::{Bus, BusError};

pub use manifest::{
    emit_manifest, load_component_params, load_manifest, load_manifest_file, load_manifest_with,
    ComponentDescriptor, Manifest, ManifestError, ManifestOptions,
};
pub use runtime::{ComponentFactory, Runtime, RuntimeError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct ComponentError(pub String);

impl ComponentError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl From<ParamError> for ComponentError {
    fn from(err: ParamError) -> Self {
        Self(err.to_string())
    }
}

impl From<TopicError> for ComponentError {
    fn from(err: TopicError) -> Self {
        Self(err.to_string())
    }
}

impl From<BusError> for ComponentError {
    fn from(err: BusError) -> Self {
        Self(err.to_string())
    }
}

impl From<&str> for ComponentError {
    fn from(msg: &str) -> Self {
        Self(msg.to_owned())
    }
}

impl From<String> for ComponentError {
    fn from(msg: String) -> Self {
        Self(msg)
    }
}

pub trait Component: Send {
    fn init(&mut self, ctx: &mut InitContext<'_>) -> Result<(), ComponentError>;

    fn on_message(&mut self, _envelope: &MessageEnvelope) -> Result<(), ComponentError> {
        Ok(())
    }

    /// Called by the serve timer, if the component has one.
    fn serve(&mut self) -> Result<(), ComponentError> {
        Ok(())
    }

    fn shutdown(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ComponentState {
    Created = 0,
    Initialized = 1,
    Running = 2,
    Stopped = 3,
    Failed = 4,
}

impl ComponentState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => Self::Created,
            1 => Self::Initialized,
            2 => Self::Running,
            3 => Self::Stopped,
            _ => Self::Failed,
        }
    }

    /// Allowed moves: created → initialized → running → stopped, and any
    /// state → failed.
    pub fn can_move_to(self, next: ComponentState) -> bool {
        use ComponentState::*;
        matches!(
            (self, next),
            (Created, Initialized) | (Initialized, Running) | (Running, Stopped) | (_, Failed)
        )
    }
}

#[derive(Debug)]
pub(crate) struct Status {
    state: AtomicU8,
    failure: Mutex<Option<String>>,
}

impl Status {
    fn new() -> Self {
        Self {
            state: AtomicU8::new(ComponentState::Created as u8),
            failure: Mutex::new(None),
        }
    }

    pub(crate) fn get(&self) -> ComponentState {
        ComponentState::from_u8(self.state.load(Ordering::Acquire))
    }

    /// Applies `next` if it is a legal transition from the current state.
    pub(crate) fn advance(&self, next: ComponentState) -> bool {
        let mut current = self.state.load(Ordering::Acquire);
        loop {
            if !ComponentState::from_u8(current).can_move_to(next) {
                return false;
            }
            match self.state.compare_exchange(
                current,
                next as u8,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => return true,
                Err(actual) => current = actual,
            }
        }
    }

    pub(crate) fn fail(&self, reason: impl Into<String>) {
        let mut failure = self.failure.lock().unwrap_or_else(|e| e.into_inner());
        if failure.is_none() {
            *failure = Some(reason.into());
        }
        drop(failure);
        self.state
            .store(ComponentState::Failed as u8, Ordering::Release);
    }
}

/// Runtime-side view of a registered component.
#[derive(Debug, Clone)]
pub struct ComponentHandle {
    pub(crate) name: String,
    pub(crate) descriptor: ComponentDescriptor,
    pub(crate) publishers: Vec<TopicName>,
    pub(crate) subscriptions: Vec<fastcycle_core::SubscriberId>,
    pub(crate) status: Arc<Status>,
}

impl ComponentHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn descriptor(&self) -> &ComponentDescriptor {
        &self.descriptor
    }

    pub fn state(&self) -> ComponentState {
        self.status.get()
    }

    pub fn publishers(&self) -> &[TopicName] {
        &self.publishers
    }

    pub fn subscriptions(&self) -> &[fastcycle_core::SubscriberId] {
        &self.subscriptions
    }

    /// Why the component was quarantined, if it was.
    pub fn failure(&self) -> Option<String> {
        self.status
            .failure
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}

/// Publishing end declared by a component during init.
#[derive(Debug, Clone)]
pub struct Publisher {
    topic: TopicName,
    bus: Bus,
}

impl Publisher {
    pub fn topic(&self) -> &TopicName {
        &self.topic
    }

    pub fn publish(&self, payload: impl Into<Arc<Payload>>) -> Result<PublishReceipt, BusError> {
        self.bus.publish(&self.topic, payload)
    }

    pub fn now(&self) -> Timestamp {
        self.bus.now()
    }
}

/// What a component sees while initialising.
pub struct InitContext<'a> {
    descriptor: &'a ComponentDescriptor,
    bus: &'a Bus,
    publishers: Vec<TopicName>,
    subscriptions: Vec<(TopicName, SubscribeOptions)>,
}

impl<'a> InitContext<'a> {
    pub(crate) fn new(descriptor: &'a ComponentDescriptor, bus: &'a Bus) -> Self {
        Self {
            descriptor,
            bus,
            publishers: Vec::new(),
            subscriptions: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn params(&self) -> &ParamStore {
        &self.descriptor.params
    }

    pub fn bus(&self) -> &Bus {
        self.bus
    }

    pub fn publisher(&mut self, topic: &str) -> Result<Publisher, ComponentError> {
        let topic = TopicName::new(topic)?;
        self.bus.create_topic(topic.as_str())?;
        if !self.publishers.contains(&topic) {
            self.publishers.push(topic.clone());
        }
        Ok(Publisher {
            topic,
            bus: self.bus.clone(),
        })
    }

    /// Declares an unbounded subscription; messages arrive in `on_message`.
    pub fn subscribe(&mut self, topic: &str) -> Result<(), ComponentError> {
        self.subscribe_with(topic, SubscribeOptions::unbounded())
    }

    pub fn subscribe_with(
        &mut self,
        topic: &str,
        options: SubscribeOptions,
    ) -> Result<(), ComponentError> {
        let topic = TopicName::new(topic)?;
        self.subscriptions.push((topic, options));
        Ok(())
    }

    pub(crate) fn into_declarations(self) -> (Vec<TopicName>, Vec<(TopicName, SubscribeOptions)>) {
        (self.publishers, self.subscriptions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle_transitions() {
        use ComponentState::*;
        assert!(Created.can_move_to(Initialized));
        assert!(Initialized.can_move_to(Running));
        assert!(Running.can_move_to(Stopped));
        assert!(Stopped.can_move_to(Failed));
        assert!(!Created.can_move_to(Running));
        assert!(!Stopped.can_move_to(Running));
        assert!(!Running.can_move_to(Initialized));
    }

    #[test]
    fn status_refuses_illegal_moves() {
        let s = Status::new();
        assert!(!s.advance(ComponentState::Running));
        assert!(s.advance(ComponentState::Initialized));
        assert!(s.advance(ComponentState::Running));
        s.fail("boom");
        assert_eq!(s.get(), ComponentState::Failed);
        assert!(!s.advance(ComponentState::Stopped));
    }
}
