//! Scenarios shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::thread;
use std::time::Duration;

use fastcycle::{Broker, BrokerConfig, Bus, Payload, Scope, StopMode, SubscribeOptions, TopicName};

#[derive(Debug, Clone, Copy)]
pub struct FanoutCase {
    pub publishers: usize,
    pub subscribers: usize,
    /// Total messages across all publishers.
    pub messages: usize,
    pub workers: usize,
    /// Subscribers at these indices use the wildcard scope instead of one
    /// subscription per topic.
    pub wildcard_mask: u8,
}

/// Publishers on their own threads, each on its own topic; every subscriber
/// hears every topic. Checks callback counts and per-topic ordering after a
/// drain.
/// (publisher, sequence) pairs in delivery order.
type Log = Arc<Mutex<Vec<(usize, u64)>>>;

pub fn run_fanout(case: FanoutCase) -> Result<(), String> {
    let bus = Bus::new();
    let topics: Vec<TopicName> = (0..case.publishers)
        .map(|p| TopicName::new(&format!("pub/{p}")).unwrap())
        .collect();
    let logs: Vec<Log> = (0..case.subscribers)
        .map(|_| Arc::new(Mutex::new(Vec::new())))
        .collect();

    for (s, log) in logs.iter().enumerate() {
        let scopes: Vec<Scope> = if case.wildcard_mask & (1 << s) != 0 {
            vec![Scope::All]
        } else {
            topics.iter().cloned().map(Scope::Topic).collect()
        };
        for scope in scopes {
            let log = Arc::clone(log);
            bus.subscribe_scope(
                scope,
                SubscribeOptions::unbounded(),
                Arc::new(move |env| {
                    let p: usize = env.topic.as_str()[4..].parse().unwrap();
                    log.lock().unwrap().push((p, env.seq));
                    Ok(())
                }),
            );
        }
    }

    let mut broker =
        Broker::start(&bus, BrokerConfig::with_workers(case.workers)).map_err(|e| e.to_string())?;
    let per_pub: Vec<usize> = (0..case.publishers)
        .map(|p| case.messages / case.publishers + usize::from(p < case.messages % case.publishers))
        .collect();
    let start = Arc::new(Barrier::new(case.publishers));
    let senders: Vec<_> = topics
        .iter()
        .cloned()
        .zip(per_pub.iter().copied())
        .map(|(topic, n)| {
            let bus = bus.clone();
            let start = Arc::clone(&start);
            thread::spawn(move || {
                start.wait();
                for i in 0..n {
                    bus.publish(&topic, Payload::from(&(i as u64).to_le_bytes()[..]))
                        .unwrap();
                }
            })
        })
        .collect();
    for s in senders {
        s.join().map_err(|_| "publisher panicked".to_string())?;
    }
    let stats = broker.stop(StopMode::Drain).map_err(|e| e.to_string())?;

    let want = case.messages * case.subscribers;
    if stats.dispatched as usize != want || stats.dropped != 0 {
        return Err(format!(
            "dispatched {} dropped {}, want {want} and 0",
            stats.dispatched, stats.dropped
        ));
    }
    for (s, log) in logs.iter().enumerate() {
        let log = log.lock().unwrap();
        if log.len() != case.messages {
            return Err(format!(
                "subscriber {s} got {} of {}",
                log.len(),
                case.messages
            ));
        }
        let mut last: HashMap<usize, u64> = HashMap::new();
        for &(p, seq) in log.iter() {
            if let Some(prev) = last.insert(p, seq) {
                if seq <= prev {
                    return Err(format!("subscriber {s} topic {p}: seq {seq} after {prev}"));
                }
            }
        }
    }
    Ok(())
}

/// Highest number of callbacks observed running at once for any single
/// subscriber.
pub fn max_callback_concurrency(messages: usize, subscribers: usize, workers: usize) -> usize {
    let bus = Bus::new();
    let peak = Arc::new(AtomicUsize::new(0));
    for _ in 0..subscribers {
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::clone(&peak);
        bus.subscribe("stress", SubscribeOptions::unbounded(), move |_| {
            let now = active.fetch_add(1, Ordering::SeqCst) + 1;
            peak.fetch_max(now, Ordering::SeqCst);
            // widen the window a little
            for _ in 0..50 {
                std::hint::spin_loop();
            }
            thread::yield_now();
            active.fetch_sub(1, Ordering::SeqCst);
            Ok(())
        })
        .unwrap();
    }
    let mut broker = Broker::start(&bus, BrokerConfig::with_workers(workers)).unwrap();
    let topic = TopicName::new("stress").unwrap();
    for i in 0..messages {
        bus.publish(&topic, Payload::from(vec![i as u8; 16]))
            .unwrap();
    }
    let stats = broker.stop(StopMode::Drain).unwrap();
    assert_eq!(stats.dispatched as usize, messages * subscribers);
    peak.load(Ordering::SeqCst)
}

/// Ticks of a serve timer with `period` on an otherwise idle broker after
/// `run_for`.
pub fn timer_ticks(periods: &[Duration], run_for: Duration) -> Vec<u64> {
    let bus = Bus::new();
    let mut broker = Broker::start(&bus, BrokerConfig::with_workers(2)).unwrap();
    let timers: Vec<_> = periods
        .iter()
        .map(|p| broker.schedule(*p, || Ok(())).unwrap())
        .collect();
    thread::sleep(run_for);
    for t in &timers {
        t.cancel();
    }
    let ticks = timers.iter().map(|t| t.ticks()).collect();
    broker.stop(StopMode::Immediate).unwrap();
    ticks
}

/// Component that counts what it sees; `fail_init` makes init fail.
pub struct Counter {
    pub fail_init: bool,
    pub seen: Arc<AtomicUsize>,
}

impl fastcycle::Component for Counter {
    fn init(
        &mut self,
        ctx: &mut fastcycle::component::InitContext<'_>,
    ) -> Result<(), fastcycle::ComponentError> {
        if self.fail_init {
            return Err("refusing to start".into());
        }
        let topic: String = ctx.params().get_or("topic", "ticks".to_string())?;
        ctx.subscribe(&topic)?;
        Ok(())
    }

    fn on_message(
        &mut self,
        _: &fastcycle::MessageEnvelope,
    ) -> Result<(), fastcycle::ComponentError> {
        self.seen.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
}

pub const ISOLATION_MANIFEST: &str = r#"{
  "components": [
    { "name": "alpha" },
    { "name": "broken", "params": { "topic": "ticks" } },
    { "name": "beta", "params": { "topic": "ticks" } },
    { "name": "gamma" }
  ]
}"#;

/// One init-failing component among three healthy ones: the healthy ones run
/// and receive traffic, the broken one is reported failed.
pub fn run_isolation() -> Result<(), String> {
    use fastcycle::component::load_manifest;
    use fastcycle::ComponentState;

    let manifest = load_manifest(ISOLATION_MANIFEST).map_err(|e| e.to_string())?;
    let mut runtime = fastcycle::Runtime::new(Bus::new());
    let seen = Arc::new(AtomicUsize::new(0));
    for name in ["alpha", "broken", "beta", "gamma"] {
        let seen = Arc::clone(&seen);
        runtime.register_factory(name, move |d| {
            Box::new(Counter {
                fail_init: d.name == "broken",
                seen: Arc::clone(&seen),
            })
        });
    }
    let results = runtime.load(&manifest);
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures != 1 {
        return Err(format!("{failures} registrations failed, want 1"));
    }
    runtime
        .start(BrokerConfig::with_workers(2))
        .map_err(|e| e.to_string())?;
    let running = runtime.handles_in(ComponentState::Running).len();
    let failed = runtime.handles_in(ComponentState::Failed);
    if running != 3 || failed.len() != 1 || failed[0].name() != "broken" {
        return Err(format!(
            "{running} running, failed {:?}",
            failed.iter().map(|h| h.name()).collect::<Vec<_>>()
        ));
    }
    for _ in 0..10 {
        runtime
            .bus()
            .publish_to("ticks", Payload::empty())
            .map_err(|e| e.to_string())?;
    }
    runtime.stop(StopMode::Drain).map_err(|e| e.to_string())?;
    let got = seen.load(Ordering::SeqCst);
    if got != 30 {
        return Err(format!("healthy components saw {got} messages, want 30"));
    }
    Ok(())
}

/// Bundled zero-delay pipeline: every message crosses all four stages with
/// non-decreasing hop timestamps.
pub fn run_demo_zero_delay(messages: usize) -> Result<(), String> {
    use fastcycle::bench::{demo_pipeline, DemoConfig, DEMO_MANIFEST};
    use fastcycle::component::load_manifest;

    let manifest = load_manifest(DEMO_MANIFEST).map_err(|e| e.to_string())?;
    let config = DemoConfig {
        messages,
        worker_count: 2,
        ..DemoConfig::default()
    };
    let report = demo_pipeline(&manifest, &config).map_err(|e| e.to_string())?;
    if !report.failed.is_empty() {
        return Err(format!("components failed: {:?}", report.failed));
    }
    if report.traces.len() != messages {
        return Err(format!(
            "{} traces for {messages} messages",
            report.traces.len()
        ));
    }
    for trace in &report.traces {
        if let Some(stage) = trace.missing {
            return Err(format!("message {} never reached {stage}", trace.id));
        }
        let mut times = vec![trace.injected];
        for hop in &trace.hops {
            times.push(hop.received);
            times.push(hop.published);
        }
        if trace.hops.len() != 4 || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("message {}: bad hops {:?}", trace.id, trace.hops));
        }
    }
    Ok(())
}

/// Logs 1000 publishes across three topics to a temp file through a broker
/// and replays the file; records must match the publishes field for field.
pub fn run_log_file_roundtrip() -> Result<(), String> {
    use std::io::BufWriter;

    use fastcycle::logging::{attach_logger, replay, LoggerOptions, TopicFilter};

    let file = tempfile::NamedTempFile::new().map_err(|e| e.to_string())?;
    let bus = Bus::new();
    let logger = attach_logger(
        &bus,
        TopicFilter::All,
        BufWriter::new(file.reopen().map_err(|e| e.to_string())?),
        LoggerOptions::lossless(),
    )
    .map_err(|e| e.to_string())?;
    let mut broker =
        Broker::start(&bus, BrokerConfig::with_workers(2)).map_err(|e| e.to_string())?;
    let topics = ["imu", "camera/front", "lidar"].map(|t| TopicName::new(t).unwrap());
    let mut published = Vec::new();
    for i in 0..1000usize {
        let topic = &topics[i % 3];
        let bytes: Vec<u8> = (0..(i * 7) % 300).map(|b| (b ^ i) as u8).collect();
        let receipt = bus
            .publish(topic, Payload::from(bytes.clone()))
            .map_err(|e| e.to_string())?;
        published.push((
            topic.as_str().to_owned(),
            receipt.seq,
            receipt.publish_ts.as_nanos(),
            bytes,
        ));
    }
    broker.stop(StopMode::Drain).map_err(|e| e.to_string())?;
    if logger.records_written() != 1000 || logger.dropped() != 0 {
        return Err(format!(
            "logger wrote {} and dropped {}",
            logger.records_written(),
            logger.dropped()
        ));
    }
    drop(logger.detach().map_err(|e| e.to_string())?);

    let reader = std::io::BufReader::new(file.reopen().map_err(|e| e.to_string())?);
    let records: Vec<_> = replay(reader)
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if records.len() != published.len() {
        return Err(format!("replayed {} of {}", records.len(), published.len()));
    }
    for (i, (rec, (topic, seq, ts, bytes))) in records.iter().zip(&published).enumerate() {
        if rec.topic.as_str() != topic
            || rec.seq != *seq
            || rec.publish_ts_ns != *ts
            || rec.payload != *bytes
        {
            return Err(format!("record {i} differs"));
        }
    }
    Ok(())
}

/// Reads `home` on the thread that built it and `away` on every other
/// thread. The bench publishes from the calling thread and receives on
/// workers, so every latency is exactly `away - home`.
pub struct ThreadClock {
    home_thread: thread::ThreadId,
    home: i64,
    away: i64,
}

impl ThreadClock {
    pub fn new(home: i64, away: i64) -> Arc<Self> {
        Arc::new(Self {
            home_thread: thread::current().id(),
            home,
            away,
        })
    }
}

impl fastcycle::Clock for ThreadClock {
    fn now(&self) -> fastcycle::Timestamp {
        let ns = if thread::current().id() == self.home_thread {
            self.home
        } else {
            self.away
        };
        fastcycle::Timestamp::from_nanos(ns)
    }
}

/// Small config for quick bench runs.
pub fn quick_bench(sizes: &[usize], samples: usize) -> fastcycle::bench::BenchConfig {
    fastcycle::bench::BenchConfig {
        payload_sizes: sizes.to_vec(),
        samples,
        warmup: 10,
        interval: Duration::from_micros(200),
        worker_count: 2,
        ..Default::default()
    }
}
