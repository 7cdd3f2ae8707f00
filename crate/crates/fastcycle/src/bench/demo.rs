//! Four-stage pipeline of stub components.
//!
//! Each stage subscribes to its `input` topic, sleeps `delay_ms`, republishes
//! the payload it received on `output` and records a hop. The first eight
//! payload bytes identify the message.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use fastcycle_core::{
    compute_stats, MessageEnvelope, Payload, Sample, StatsError, StatsSummary, Timestamp,
};

use super::BenchError;
use crate::broker::{BrokerConfig, StopMode};
use crate::bus::Bus;
use crate::component::{
    Component, ComponentError, InitContext, Manifest, Publisher, Runtime, RuntimeError,
};

/// Stage names in chain order.
pub const DEMO_STAGES: [&str; 4] = ["driver", "perception", "planning", "control"];

/// Topic the harness injects messages on; the first stage reads it.
pub const SOURCE_TOPIC: &str = "demo/sensor";

/// The bundled zero-delay pipeline manifest.
pub const DEMO_MANIFEST: &str = include_str!("../../manifests/demo.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub stage: &'static str,
    /// Stage callback entry.
    pub received: Timestamp,
    /// Timestamp of the stage's republish.
    pub published: Timestamp,
}

/// Collects hops from all stages, keyed by message id.
#[derive(Debug, Default)]
pub struct TraceSink {
    hops: Mutex<BTreeMap<u64, Vec<Hop>>>,
}

impl TraceSink {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn record(&self, id: u64, hop: Hop) {
        self.hops
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(id)
            .or_default()
            .push(hop);
    }

    fn take(&self, id: u64) -> Vec<Hop> {
        self.hops
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .remove(&id)
            .unwrap_or_default()
    }
}

pub struct Stage {
    name: &'static str,
    sink: Arc<TraceSink>,
    delay: Duration,
    output: Option<Publisher>,
}

impl Stage {
    pub fn new(name: &'static str, sink: Arc<TraceSink>) -> Self {
        Self {
            name,
            sink,
            delay: Duration::ZERO,
            output: None,
        }
    }
}

impl Component for Stage {
    fn init(&mut self, ctx: &mut InitContext<'_>) -> Result<(), ComponentError> {
        let input: String = ctx.params().get("input")?;
        let output: String = ctx.params().get("output")?;
        let delay_ms: f64 = ctx.params().get_or("delay_ms", 0.0)?;
        if !(delay_ms.is_finite() && delay_ms >= 0.0) {
            return Err(ComponentError::new(format!(
                "delay_ms must be >= 0, got {delay_ms}"
            )));
        }
        self.delay = Duration::from_secs_f64(delay_ms / 1e3);
        self.output = Some(ctx.publisher(&output)?);
        ctx.subscribe(&input)?;
        Ok(())
    }

    fn on_message(&mut self, env: &MessageEnvelope) -> Result<(), ComponentError> {
        let output = self.output.as_ref().ok_or("stage not initialised")?;
        let received = output.now();
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        let receipt = output.publish(Arc::clone(&env.payload))?;
        self.sink.record(
            message_id(env.bytes()),
            Hop {
                stage: self.name,
                received,
                published: receipt.publish_ts,
            },
        );
        Ok(())
    }
}

fn message_id(bytes: &[u8]) -> u64 {
    let mut id = [0u8; 8];
    let n = bytes.len().min(8);
    id[..n].copy_from_slice(&bytes[..n]);
    u64::from_le_bytes(id)
}

/// Registers a [`Stage`] factory under each name in [`DEMO_STAGES`].
pub fn register_demo_stages(runtime: &mut Runtime, sink: &Arc<TraceSink>) {
    for name in DEMO_STAGES {
        let sink = Arc::clone(sink);
        runtime.register_factory(name, move |_| Box::new(Stage::new(name, Arc::clone(&sink))));
    }
}

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub messages: usize,
    pub interval: Duration,
    /// At least 8 bytes, to hold the message id.
    pub payload_size: usize,
    pub worker_count: usize,
    /// How long to wait for in-flight messages after the last injection.
    pub settle_timeout: Duration,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            messages: 100,
            interval: Duration::from_millis(1),
            payload_size: 1024,
            worker_count: thread::available_parallelism().map_or(1, |n| n.get()),
            settle_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MessageTrace {
    pub id: u64,
    pub injected: Timestamp,
    /// Hops in chain order.
    pub hops: Vec<Hop>,
    /// First stage the message never reached.
    pub missing: Option<&'static str>,
}

impl MessageTrace {
    pub fn is_complete(&self) -> bool {
        self.missing.is_none()
    }

    /// Injection to the last stage's republish, when the message got through.
    pub fn end_to_end_ns(&self) -> Option<i64> {
        match (self.missing, self.hops.last()) {
            (None, Some(last)) => Some(last.published - self.injected),
            _ => None,
        }
    }

    /// Transport time into each stage: callback entry minus the previous
    /// publish.
    pub fn hop_latencies_ns(&self) -> Vec<i64> {
        let mut prev = self.injected;
        self.hops
            .iter()
            .map(|h| {
                let d = h.received - prev;
                prev = h.published;
                d
            })
            .collect()
    }

    /// Time spent inside each stage.
    pub fn stage_times_ns(&self) -> Vec<i64> {
        self.hops.iter().map(|h| h.published - h.received).collect()
    }
}

#[derive(Debug)]
pub struct DemoReport {
    pub traces: Vec<MessageTrace>,
    /// Components that could not be registered, with the reason.
    pub failed: Vec<(String, String)>,
    pub active: Vec<String>,
}

impl DemoReport {
    pub fn stalled(&self) -> impl Iterator<Item = &MessageTrace> {
        self.traces.iter().filter(|t| !t.is_complete())
    }

    /// End-to-end statistics over completed messages.
    pub fn summary(&self, payload_size: usize) -> Result<StatsSummary, StatsError> {
        let samples: Vec<Sample> = self
            .traces
            .iter()
            .filter_map(|t| {
                let last = t.hops.last().filter(|_| t.is_complete())?;
                Some(Sample::new(t.id, t.injected, last.published))
            })
            .collect();
        compute_stats(payload_size, &samples)
    }
}

/// Runs the pipeline described by `manifest`, injecting `config.messages`
/// payloads on [`SOURCE_TOPIC`] and tracing each one through the stages.
pub fn demo_pipeline(manifest: &Manifest, config: &DemoConfig) -> Result<DemoReport, BenchError> {
    if config.payload_size < 8 {
        return Err(BenchError::InvalidConfig(
            "demo payload must be at least 8 bytes".into(),
        ));
    }
    if config.worker_count == 0 {
        return Err(BenchError::InvalidConfig(
            "worker count must be at least 1".into(),
        ));
    }

    let bus = Bus::new();
    let sink = TraceSink::new();
    let mut runtime = Runtime::new(bus.clone());
    register_demo_stages(&mut runtime, &sink);

    let mut failed = Vec::new();
    let mut active = Vec::new();
    for (descriptor, result) in manifest.active.iter().zip(runtime.load(manifest)) {
        match result {
            Ok(handle) => active.push(handle.name().to_owned()),
            Err(RuntimeError::InitFailed { name, reason, .. }) => failed.push((name, reason)),
            Err(err) => failed.push((descriptor.name.clone(), err.to_string())),
        }
    }

    runtime
        .start(BrokerConfig::with_workers(config.worker_count))
        .map_err(|e| BenchError::Scenario(e.to_string()))?;

    let source = fastcycle_core::TopicName::new(SOURCE_TOPIC).expect("valid topic");
    let mut injected = Vec::with_capacity(config.messages);
    let start = Instant::now();
    let mut send_error = None;
    for k in 0..config.messages {
        let deadline = start + config.interval * k as u32;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
        let mut bytes = vec![0u8; config.payload_size];
        bytes[..8].copy_from_slice(&(k as u64).to_le_bytes());
        match bus.publish(&source, Payload::new(bytes)) {
            Ok(receipt) => injected.push(receipt.publish_ts),
            Err(err) => {
                send_error = Some(err);
                break;
            }
        }
    }
    // stages republish from callbacks, which a draining bus refuses
    bus.wait_idle(config.settle_timeout);
    runtime
        .stop(StopMode::Drain)
        .map_err(|e| BenchError::Scenario(e.to_string()))?;
    if let Some(err) = send_error {
        return Err(err.into());
    }

    let traces = injected
        .into_iter()
        .enumerate()
        .map(|(k, injected)| {
            let mut hops = sink.take(k as u64);
            hops.sort_by_key(|h| DEMO_STAGES.iter().position(|s| *s == h.stage));
            let missing = DEMO_STAGES
                .iter()
                .copied()
                .find(|s| !hops.iter().any(|h| h.stage == *s));
            MessageTrace {
                id: k as u64,
                injected,
                hops,
                missing,
            }
        })
        .collect();

    Ok(DemoReport {
        traces,
        failed,
        active,
    })
}
