//! Allocation-only core of the fastcycle message broker.
//!
//! Everything in this crate is pure data structure and arithmetic: the topic
//! registry and its per-subscriber queues, the immutable shared payload, the
//! binary log record codec, typed component parameters, fixed-rate timer
//! bookkeeping and the latency statistics used by the benchmark harness.
//! Threads, clocks backed by the OS, files and the CLI live in the `fastcycle`
//! crate.

#![no_std]
#![deny(rustdoc::broken_intra_doc_links)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod clock;
pub mod envelope;
pub mod params;
pub mod payload;
pub mod queue;
pub mod record;
pub mod registry;
pub mod report;
pub mod stats;
pub mod timer;
pub mod topic;

pub use clock::{Clock, ManualClock, Timestamp};
pub use envelope::MessageEnvelope;
pub use params::{ParamError, ParamStore, ParamType, ParamValue};
pub use payload::{InstanceId, Payload};
pub use queue::{Capacity, CapacityError, DropPolicy, PushOutcome, SubscriberQueue};
pub use record::{decode_record, encode_record, DecodeError, LogRecord};
pub use registry::{
    Delivery, PublishError, PublishReceipt, ReadyTask, RegistryCounters, Scope, SubscribeError,
    SubscribeOptions, SubscriberId, SubscriptionEntry, TopicRecord, TopicRegistry,
};
pub use report::{render_report, ReportFormat};
pub use stats::{compute_stats, Sample, StatsError, StatsSummary};
pub use timer::{Due, FixedRate, InvalidPeriod};
pub use topic::{TopicError, TopicName};
