//! Zero-copy intra-process publish/subscribe.
//!
//! Publishers hand a [`Payload`] to the [`Bus`]; every subscriber of the topic
//! receives the same shared allocation. A [`Broker`] drains subscriber queues
//! on a worker pool. Components, a binary logger and a benchmark harness sit
//! on top of that.
//!
//! ```
//! use std::sync::mpsc;
//! use fastcycle::{Broker, BrokerConfig, Bus, Payload, StopMode, SubscribeOptions};
//!
//! let bus = Bus::new();
//! let (tx, rx) = mpsc::channel();
//! bus.subscribe("chatter", SubscribeOptions::unbounded(), move |env| {
//!     tx.send(env.bytes().to_vec()).unwrap();
//!     Ok(())
//! })
//! .unwrap();
//!
//! let mut broker = Broker::start(&bus, BrokerConfig::with_workers(1)).unwrap();
//! bus.publish_to("chatter", Payload::from(&b"hello"[..])).unwrap();
//! assert_eq!(rx.recv().unwrap(), b"hello");
//! broker.stop(StopMode::Drain).unwrap();
//! ```

pub mod bench;
pub mod broker;
pub mod bus;
pub mod clock;
pub mod component;
pub mod logging;

pub use fastcycle_core as core;
pub use fastcycle_core::{
    Capacity, Clock, Delivery, DropPolicy, LogRecord, ManualClock, MessageEnvelope, ParamStore,
    ParamValue, Payload, PublishReceipt, Scope, SubscribeOptions, SubscriberId, Timestamp,
    TopicName,
};

pub use broker::{Broker, BrokerConfig, BrokerError, BrokerStats, ServeTimer, StopMode, Wakeup};
pub use bus::{Bus, BusError, CallbackError, CallbackResult};
pub use clock::MonotonicClock;
pub use component::{Component, ComponentDescriptor, ComponentError, ComponentState, Runtime};
pub use logging::{attach_logger, replay, LoggerHandle, LoggerOptions, TopicFilter};
