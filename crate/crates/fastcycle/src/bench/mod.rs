//! Latency, round-trip and pipeline benchmarks.
//!
//! Every payload size gets its own bus and broker. The sender runs on the
//! calling thread and paces publishes against absolute deadlines
//! (`start + k * interval`). A payload is built fresh for each message; its
//! first eight bytes hold the message index so receivers can match samples.
//! `t_pub` is the envelope timestamp taken inside `publish`, `t_recv` is read
//! on entry to the receiving callback.

mod demo;

use std::sync::atomic::{AtomicI64, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use fastcycle_core::{
    compute_stats, Clock, Delivery, MessageEnvelope, Payload, Sample, StatsError, StatsSummary,
    SubscribeOptions, TopicName,
};
use rand::rngs::StdRng;
use rand::{RngCore, SeedableRng};

use crate::broker::{Broker, BrokerConfig, BrokerError, BrokerStats, StopMode};
use crate::bus::{Bus, BusError};
use crate::clock::MonotonicClock;

pub use demo::{
    demo_pipeline, register_demo_stages, DemoConfig, DemoReport, Hop, MessageTrace, Stage,
    TraceSink, DEMO_MANIFEST, DEMO_STAGES, SOURCE_TOPIC,
};

pub const DEFAULT_SIZES: [usize; 5] = [32_768, 131_072, 524_288, 1_048_576, 4_194_304];

pub const LATENCY_TOPIC: &str = "bench/latency";
pub const PING_TOPIC: &str = "bench/ping";
pub const PONG_TOPIC: &str = "bench/pong";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Latency,
    Rtt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    ZeroCopy,
    /// Every delivery deep-copies the payload before the callback runs.
    ForcedCopy,
}

impl Transport {
    fn delivery(self) -> Delivery {
        match self {
            Transport::ZeroCopy => Delivery::ZeroCopy,
            Transport::ForcedCopy => Delivery::DeepCopy,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub payload_sizes: Vec<usize>,
    pub samples: usize,
    pub interval: Duration,
    pub warmup: usize,
    pub mode: Mode,
    pub transport: Transport,
    pub worker_count: usize,
    /// Seed for payload content.
    pub seed: u64,
    /// Rtt runs only: whether the echo subscriber is attached.
    pub echo: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            payload_sizes: DEFAULT_SIZES.to_vec(),
            samples: 5000,
            interval: Duration::from_millis(1),
            warmup: 100,
            mode: Mode::Latency,
            transport: Transport::ZeroCopy,
            worker_count: thread::available_parallelism().map_or(1, |n| n.get()),
            seed: 0,
            echo: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let invalid = |msg: &str| Err(BenchError::InvalidConfig(msg.to_owned()));
        if self.samples < 2 {
            return invalid("samples must be at least 2");
        }
        if self.payload_sizes.is_empty() {
            return invalid("at least one payload size is required");
        }
        if self.payload_sizes.contains(&0) {
            return invalid("payload sizes must be at least 1 byte");
        }
        if self.worker_count == 0 {
            return invalid("worker count must be at least 1");
        }
        Ok(())
    }

    /// How long a ping may wait for its echo before the sample counts as lost.
    pub fn echo_timeout(&self) -> Duration {
        self.interval.max(Duration::from_millis(1)) * 10
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Scenario(String),
}

/// Samples and bookkeeping for one payload size.
#[derive(Debug, Clone)]
pub struct SizeRun {
    pub size_bytes: usize,
    /// Measured messages, warmup excluded, in index order.
    pub samples: Vec<Sample>,
    /// Measured messages that produced no sample.
    pub lost: usize,
    /// Of `lost`, echoes that arrived after the echo timeout.
    pub timeouts: usize,
    /// Deliveries whose payload instance id matched the published one.
    pub same_instance: usize,
    /// Deliveries whose payload was a different instance.
    pub other_instance: usize,
    pub broker: BrokerStats,
}

impl SizeRun {
    pub fn summary(&self) -> Result<StatsSummary, StatsError> {
        compute_stats(self.size_bytes, &self.samples)
    }
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub mode: Mode,
    pub transport: Transport,
    pub sizes: Vec<SizeRun>,
}

impl BenchRun {
    pub fn size(&self, bytes: usize) -> Option<&SizeRun> {
        self.sizes.iter().find(|r| r.size_bytes == bytes)
    }

    pub fn summaries(&self) -> Result<Vec<StatsSummary>, StatsError> {
        self.sizes.iter().map(SizeRun::summary).collect()
    }

    /// One line per size that lost samples.
    pub fn lost_sample_warnings(&self) -> Vec<String> {
        self.sizes
            .iter()
            .filter(|r| r.lost > 0)
            .map(|r| {
                let mut line = format!(
                    "lost samples at {} bytes: {} of {}",
                    r.size_bytes,
                    r.lost,
                    r.lost + r.samples.len()
                );
                if r.timeouts > 0 {
                    line.push_str(&format!(" ({} echo timeouts)", r.timeouts));
                }
                line
            })
            .collect()
    }
}

pub fn run(config: &BenchConfig) -> Result<BenchRun, BenchError> {
    match config.mode {
        Mode::Latency => run_latency(config),
        Mode::Rtt => run_rtt(config),
    }
}

pub fn run_latency(config: &BenchConfig) -> Result<BenchRun, BenchError> {
    run_latency_with(config, Arc::new(MonotonicClock::new()))
}

pub fn run_rtt(config: &BenchConfig) -> Result<BenchRun, BenchError> {
    run_rtt_with(config, Arc::new(MonotonicClock::new()))
}

/// Latency run with an injected clock.
pub fn run_latency_with(
    config: &BenchConfig,
    clock: Arc<dyn Clock>,
) -> Result<BenchRun, BenchError> {
    config.validate()?;
    let sizes = config
        .payload_sizes
        .iter()
        .map(|&size| latency_for_size(config, size, Arc::clone(&clock)))
        .collect::<Result<_, _>>()?;
    Ok(BenchRun {
        mode: Mode::Latency,
        transport: config.transport,
        sizes,
    })
}

/// Round-trip run with an injected clock.
pub fn run_rtt_with(config: &BenchConfig, clock: Arc<dyn Clock>) -> Result<BenchRun, BenchError> {
    config.validate()?;
    let sizes = config
        .payload_sizes
        .iter()
        .map(|&size| rtt_for_size(config, size, Arc::clone(&clock)))
        .collect::<Result<_, _>>()?;
    Ok(BenchRun {
        mode: Mode::Rtt,
        transport: config.transport,
        sizes,
    })
}

/// Per-message receive slots shared between sender and callbacks.
struct Probe {
    t_pub: Vec<AtomicI64>,
    t_recv: Vec<AtomicI64>,
    sent_id: Vec<AtomicU64>,
    seen_id: Vec<AtomicU64>,
    received: AtomicUsize,
}

const UNSET: i64 = i64::MIN;

impl Probe {
    fn new(n: usize) -> Self {
        let slots = |v: i64| (0..n).map(|_| AtomicI64::new(v)).collect();
        let ids = || (0..n).map(|_| AtomicU64::new(0)).collect();
        Self {
            t_pub: slots(UNSET),
            t_recv: slots(UNSET),
            sent_id: ids(),
            seen_id: ids(),
            received: AtomicUsize::new(0),
        }
    }

    /// Called first thing in a receiving callback.
    fn record(&self, env: &MessageEnvelope, t_recv: i64) {
        let k = message_index(env) as usize;
        if let Some(slot) = self.t_recv.get(k) {
            slot.store(t_recv, Ordering::Release);
            self.seen_id[k].store(env.payload.instance_id().get(), Ordering::Release);
            self.received.fetch_add(1, Ordering::AcqRel);
        }
    }

    fn collect(&self, config: &BenchConfig, size: usize, broker: BrokerStats) -> SizeRun {
        let timeout = match config.mode {
            Mode::Rtt => Some(config.echo_timeout().as_nanos() as i64),
            Mode::Latency => None,
        };
        let mut run = SizeRun {
            size_bytes: size,
            samples: Vec::with_capacity(config.samples),
            lost: 0,
            timeouts: 0,
            same_instance: 0,
            other_instance: 0,
            broker,
        };
        for k in config.warmup..config.warmup + config.samples {
            let t_pub = self.t_pub[k].load(Ordering::Acquire);
            let t_recv = self.t_recv[k].load(Ordering::Acquire);
            if t_pub == UNSET || t_recv == UNSET {
                run.lost += 1;
                continue;
            }
            if self.seen_id[k].load(Ordering::Acquire) == self.sent_id[k].load(Ordering::Acquire) {
                run.same_instance += 1;
            } else {
                run.other_instance += 1;
            }
            if timeout.is_some_and(|limit| t_recv - t_pub > limit) {
                run.lost += 1;
                run.timeouts += 1;
                continue;
            }
            run.samples.push(Sample::new(
                (k - config.warmup) as u64,
                fastcycle_core::Timestamp::from_nanos(t_pub),
                fastcycle_core::Timestamp::from_nanos(t_recv),
            ));
        }
        run
    }
}

/// Index carried in the first eight payload bytes; payloads shorter than
/// that fall back to the topic sequence number, which starts at zero on a
/// fresh bus.
fn message_index(env: &MessageEnvelope) -> u64 {
    match env.bytes().get(..8) {
        Some(head) => u64::from_le_bytes(head.try_into().expect("8 bytes")),
        None => env.seq,
    }
}

/// Seeded filler copied into every payload of one size.
fn pattern(size: usize, seed: u64) -> Vec<u8> {
    let mut bytes = vec![0u8; size];
    StdRng::seed_from_u64(seed ^ size as u64).fill_bytes(&mut bytes);
    bytes
}

fn build_payload(pattern: &[u8], index: u64) -> Payload {
    let mut bytes = pattern.to_vec();
    let n = bytes.len().min(8);
    bytes[..n].copy_from_slice(&index.to_le_bytes()[..n]);
    Payload::new(bytes)
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        thread::sleep(deadline - now);
    }
}

/// Publishes `warmup + samples` fresh payloads on `topic`, one per deadline.
///
/// The next payload is built once the previous message has been received
/// (or given up on after the echo timeout), so construction neither shows up
/// in the measurement nor competes with a delivery in flight.
fn send_paced(
    bus: &Bus,
    topic: &TopicName,
    config: &BenchConfig,
    size: usize,
    probe: &Probe,
) -> Result<(), BenchError> {
    let pattern = pattern(size, config.seed);
    let total = config.warmup + config.samples;
    let start = Instant::now();
    let mut next = build_payload(&pattern, 0);
    for k in 0..total {
        sleep_until(start + config.interval * k as u32);
        probe.sent_id[k].store(next.instance_id().get(), Ordering::Release);
        let receipt = bus.publish(topic, next)?;
        probe.t_pub[k].store(receipt.publish_ts.as_nanos(), Ordering::Release);
        if k + 1 == total {
            break;
        }
        let answered = config.mode == Mode::Latency || config.echo;
        let give_up = Instant::now() + config.echo_timeout();
        while answered && probe.received.load(Ordering::Acquire) <= k && Instant::now() < give_up {
            thread::sleep(Duration::from_micros(20));
        }
        next = build_payload(&pattern, (k + 1) as u64);
    }
    Ok(())
}

fn broker_config(config: &BenchConfig) -> BrokerConfig {
    BrokerConfig::with_workers(config.worker_count)
}

fn latency_for_size(
    config: &BenchConfig,
    size: usize,
    clock: Arc<dyn Clock>,
) -> Result<SizeRun, BenchError> {
    let bus = Bus::with_clock(Arc::clone(&clock));
    let probe = Arc::new(Probe::new(config.warmup + config.samples));
    let topic = TopicName::new(LATENCY_TOPIC).expect("valid topic");
    bus.create_topic(LATENCY_TOPIC).expect("valid topic");

    let receiver = Arc::clone(&probe);
    let recv_clock = Arc::clone(&clock);
    bus.subscribe(
        LATENCY_TOPIC,
        SubscribeOptions::unbounded().with_delivery(config.transport.delivery()),
        move |env| {
            let t_recv = recv_clock.now().as_nanos();
            receiver.record(env, t_recv);
            Ok(())
        },
    )
    .expect("valid topic");

    let mut broker = Broker::start(&bus, broker_config(config))?;
    let sent = send_paced(&bus, &topic, config, size, &probe);
    let stats = broker.stop(StopMode::Drain)?;
    sent?;
    Ok(probe.collect(config, size, stats))
}

fn rtt_for_size(
    config: &BenchConfig,
    size: usize,
    clock: Arc<dyn Clock>,
) -> Result<SizeRun, BenchError> {
    let bus = Bus::with_clock(Arc::clone(&clock));
    let probe = Arc::new(Probe::new(config.warmup + config.samples));
    let ping = TopicName::new(PING_TOPIC).expect("valid topic");
    let pong = TopicName::new(PONG_TOPIC).expect("valid topic");
    bus.create_topic(PING_TOPIC).expect("valid topic");
    bus.create_topic(PONG_TOPIC).expect("valid topic");
    let options = SubscribeOptions::unbounded().with_delivery(config.transport.delivery());

    if config.echo {
        let echo_bus = bus.clone();
        let echo_topic = pong.clone();
        bus.subscribe(PING_TOPIC, options, move |env| {
            // same handle back out; with forced copy this is the copy the
            // echo received
            echo_bus
                .publish(&echo_topic, Arc::clone(&env.payload))
                .map(drop)
                .map_err(|e| e.to_string().into())
        })
        .expect("valid topic");
    }

    let receiver = Arc::clone(&probe);
    let recv_clock = Arc::clone(&clock);
    bus.subscribe(PONG_TOPIC, options, move |env| {
        let t_recv = recv_clock.now().as_nanos();
        receiver.record(env, t_recv);
        Ok(())
    })
    .expect("valid topic");

    let mut broker = Broker::start(&bus, broker_config(config))?;
    let sent = send_paced(&bus, &ping, config, size, &probe);
    // a draining bus refuses the echo's republish, so let outstanding
    // echoes arrive first
    if config.echo {
        let deadline = Instant::now() + config.echo_timeout();
        let total = config.warmup + config.samples;
        while probe.received.load(Ordering::Acquire) < total && Instant::now() < deadline {
            thread::sleep(Duration::from_micros(100));
        }
    }
    let stats = broker.stop(StopMode::Drain)?;
    sent?;
    Ok(probe.collect(config, size, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(BenchConfig::default().validate().is_ok());
        let bad = [
            BenchConfig {
                samples: 1,
                ..Default::default()
            },
            BenchConfig {
                payload_sizes: vec![],
                ..Default::default()
            },
            BenchConfig {
                payload_sizes: vec![16, 0],
                ..Default::default()
            },
            BenchConfig {
                worker_count: 0,
                ..Default::default()
            },
        ];
        for config in bad {
            assert!(matches!(
                config.validate(),
                Err(BenchError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn defaults() {
        let c = BenchConfig::default();
        assert_eq!(c.payload_sizes, DEFAULT_SIZES);
        assert_eq!(c.samples, 5000);
        assert_eq!(c.interval, Duration::from_millis(1));
        assert_eq!(c.warmup, 100);
        // 5100 sends at 1 ms per size
        assert_eq!(
            c.interval * (c.samples + c.warmup) as u32,
            Duration::from_millis(5100)
        );
    }

    #[test]
    fn payload_carries_index() {
        let pat = pattern(64, 7);
        let p = build_payload(&pat, 0x0102_0304);
        assert_eq!(&p.as_bytes()[..8], &0x0102_0304u64.to_le_bytes());
        assert_eq!(&p.as_bytes()[8..], &pat[8..]);
        assert_eq!(pattern(64, 7), pat);

        let tiny = build_payload(&pattern(3, 7), 5);
        assert_eq!(tiny.as_bytes(), &[5, 0, 0]);
    }

    #[test]
    fn echo_timeout_is_ten_intervals() {
        let mut c = BenchConfig::default();
        assert_eq!(c.echo_timeout(), Duration::from_millis(10));
        c.interval = Duration::ZERO;
        assert_eq!(c.echo_timeout(), Duration::from_millis(10));
    }
}
