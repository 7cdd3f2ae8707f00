mod common;

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use fastcycle::bench::{register_demo_stages, TraceSink};
use fastcycle::component::{load_manifest, InitContext, Publisher, RuntimeError};
use fastcycle::{
    BrokerConfig, Bus, Component, ComponentDescriptor, ComponentError, ComponentState,
    MessageEnvelope, Payload, Runtime, StopMode,
};

type Log = Arc<Mutex<Vec<String>>>;

/// Publishes on `out`, listens on `a` and `b`, logs every lifecycle call and
/// tracks how many of its own calls overlap.
struct Probe {
    log: Log,
    active: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    out: Option<Publisher>,
}

impl Probe {
    fn new(log: &Log) -> (Self, Arc<AtomicUsize>) {
        let peak = Arc::new(AtomicUsize::new(0));
        (
            Self {
                log: Arc::clone(log),
                active: Arc::new(AtomicUsize::new(0)),
                peak: Arc::clone(&peak),
                out: None,
            },
            peak,
        )
    }

    fn enter(&self, what: &str) {
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.log.lock().unwrap().push(what.to_owned());
        thread::yield_now();
        self.active.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Component for Probe {
    fn init(&mut self, ctx: &mut InitContext<'_>) -> Result<(), ComponentError> {
        self.log.lock().unwrap().push("init".into());
        self.out = Some(ctx.publisher("out")?);
        ctx.subscribe("a")?;
        ctx.subscribe("b")?;
        Ok(())
    }

    fn on_message(&mut self, _: &MessageEnvelope) -> Result<(), ComponentError> {
        self.enter("message");
        Ok(())
    }

    fn serve(&mut self) -> Result<(), ComponentError> {
        self.enter("serve");
        Ok(())
    }

    fn shutdown(&mut self) {
        self.log.lock().unwrap().push("shutdown".into());
    }
}

#[test]
fn declarations_show_up_on_the_handle() {
    let log = Log::default();
    let mut runtime = Runtime::new(Bus::new());
    let handle = runtime
        .register_component_with(ComponentDescriptor::new("probe"), |_| {
            Box::new(Probe::new(&log).0)
        })
        .unwrap();
    assert_eq!(handle.publishers().len(), 1);
    assert_eq!(handle.publishers()[0].as_str(), "out");
    assert_eq!(handle.subscriptions().len(), 2);
    assert_eq!(handle.descriptor().name, "probe");
    assert_eq!(handle.state(), ComponentState::Initialized);
    runtime.start(BrokerConfig::with_workers(1)).unwrap();
    assert_eq!(handle.state(), ComponentState::Running);
    runtime.stop(StopMode::Drain).unwrap();
    assert_eq!(handle.state(), ComponentState::Stopped);
}

#[test]
fn init_failure_is_isolated() {
    common::run_isolation().unwrap();
}

#[test]
fn init_failure_reports_the_reason() {
    let mut runtime = Runtime::default();
    let seen = Arc::new(AtomicUsize::new(0));
    let err = runtime
        .register_component_with(ComponentDescriptor::new("bad"), |_| {
            Box::new(common::Counter {
                fail_init: true,
                seen: Arc::clone(&seen),
            })
        })
        .unwrap_err();
    match err {
        RuntimeError::InitFailed {
            name,
            reason,
            handle,
        } => {
            assert_eq!(name, "bad");
            assert_eq!(reason, "refusing to start");
            assert_eq!(handle.state(), ComponentState::Failed);
            assert_eq!(handle.failure().as_deref(), Some("refusing to start"));
            assert!(handle.subscriptions().is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn components_can_share_a_topic() {
    let mut runtime = Runtime::default();
    let seen = Arc::new(AtomicUsize::new(0));
    let mut ids = Vec::new();
    for name in ["left", "right"] {
        let s = Arc::clone(&seen);
        let h = runtime
            .register_component_with(ComponentDescriptor::new(name), move |_| {
                Box::new(common::Counter {
                    fail_init: false,
                    seen: s,
                })
            })
            .unwrap();
        ids.extend_from_slice(h.subscriptions());
    }
    let info = runtime.bus().topic_info("ticks").unwrap();
    assert_eq!(info.subscribers, ids);
}

#[test]
fn registration_errors() {
    let mut runtime = Runtime::default();
    assert!(matches!(
        runtime.register_component(ComponentDescriptor::new("nobody")),
        Err(RuntimeError::UnknownComponent(n)) if n == "nobody"
    ));
    let log = Log::default();
    runtime
        .register_component_with(ComponentDescriptor::new("p"), |_| {
            Box::new(Probe::new(&log).0)
        })
        .unwrap();
    assert!(matches!(
        runtime.register_component_with(ComponentDescriptor::new("p"), |_| Box::new(
            Probe::new(&log).0
        )),
        Err(RuntimeError::DuplicateComponentName(_))
    ));
}

#[test]
fn schedule_serve_checks_period_and_state() {
    let log = Log::default();
    let mut runtime = Runtime::default();
    let handle = runtime
        .register_component_with(ComponentDescriptor::new("p"), |_| {
            Box::new(Probe::new(&log).0)
        })
        .unwrap();
    assert!(matches!(
        runtime.schedule_serve(&handle, Duration::from_millis(10)),
        Err(RuntimeError::NotRunning(_))
    ));
    runtime.start(BrokerConfig::with_workers(1)).unwrap();
    assert!(matches!(
        runtime.schedule_serve(&handle, Duration::ZERO),
        Err(RuntimeError::InvalidPeriod)
    ));
    let timer = runtime
        .schedule_serve(&handle, Duration::from_millis(10))
        .unwrap();
    thread::sleep(Duration::from_millis(60));
    assert!(timer.ticks() >= 2);
    runtime.stop(StopMode::Drain).unwrap();
}

#[test]
fn manifest_period_arms_a_serve_timer() {
    let manifest =
        load_manifest(r#"{"components": [{"name": "p", "serve_period_ms": 5}]}"#).unwrap();
    let log = Log::default();
    let mut runtime = Runtime::default();
    let l = Arc::clone(&log);
    runtime.register_factory("p", move |_| Box::new(Probe::new(&l).0));
    assert!(runtime.load(&manifest).into_iter().all(|r| r.is_ok()));
    runtime.start(BrokerConfig::with_workers(1)).unwrap();
    thread::sleep(Duration::from_millis(50));
    let timers = runtime.serve_timers("p");
    assert_eq!(timers.len(), 1);
    assert!(timers[0].ticks() > 0);
    runtime.stop(StopMode::Drain).unwrap();
    assert!(log.lock().unwrap().iter().any(|e| e == "serve"));
}

#[test]
fn lifecycle_order_and_serialization() {
    let log = Log::default();
    let (probe, peak) = Probe::new(&log);
    let mut runtime = Runtime::new(Bus::new());
    let descriptor = ComponentDescriptor::new("p").with_serve_period(Duration::from_millis(1));
    let mut probe = Some(probe);
    runtime
        .register_component_with(descriptor, |_| Box::new(probe.take().unwrap()))
        .unwrap();

    // published before start: must not reach the component before init, and
    // init already ran at registration
    runtime.bus().publish_to("a", Payload::empty()).unwrap();
    runtime.start(BrokerConfig::with_workers(4)).unwrap();
    for i in 0..2000 {
        let topic = if i % 2 == 0 { "a" } else { "b" };
        runtime.bus().publish_to(topic, Payload::empty()).unwrap();
    }
    thread::sleep(Duration::from_millis(20));
    runtime.stop(StopMode::Drain).unwrap();
    // a second stop is an error and must not call shutdown again
    assert!(runtime.stop(StopMode::Drain).is_err());

    let log = log.lock().unwrap();
    assert_eq!(log.first().map(String::as_str), Some("init"));
    assert_eq!(log.last().map(String::as_str), Some("shutdown"));
    assert_eq!(log.iter().filter(|e| *e == "init").count(), 1);
    assert_eq!(log.iter().filter(|e| *e == "shutdown").count(), 1);
    assert_eq!(log.iter().filter(|e| *e == "message").count(), 2001);
    assert!(log.iter().any(|e| e == "serve"));
    assert_eq!(peak.load(Ordering::SeqCst), 1);
}

struct Fragile {
    calls: Arc<AtomicUsize>,
}

impl Component for Fragile {
    fn init(&mut self, ctx: &mut InitContext<'_>) -> Result<(), ComponentError> {
        ctx.subscribe("ticks")?;
        Ok(())
    }

    fn on_message(&mut self, _: &MessageEnvelope) -> Result<(), ComponentError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        panic!("fragile");
    }
}

#[test]
fn failing_callback_quarantines_only_that_component() {
    let mut runtime = Runtime::default();
    let calls = Arc::new(AtomicUsize::new(0));
    let healthy = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&calls);
    let fragile = runtime
        .register_component_with(ComponentDescriptor::new("fragile"), move |_| {
            Box::new(Fragile { calls: c })
        })
        .unwrap();
    let h = Arc::clone(&healthy);
    runtime
        .register_component_with(ComponentDescriptor::new("healthy"), move |_| {
            Box::new(common::Counter {
                fail_init: false,
                seen: h,
            })
        })
        .unwrap();
    runtime.start(BrokerConfig::with_workers(2)).unwrap();
    for _ in 0..5 {
        runtime.bus().publish_to("ticks", Payload::empty()).unwrap();
    }
    runtime.stop(StopMode::Drain).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 1);
    assert_eq!(healthy.load(Ordering::SeqCst), 5);
    assert_eq!(fragile.state(), ComponentState::Failed);
    assert_eq!(fragile.failure().as_deref(), Some("panicked"));
}

/// Every bundled manifest loads, and each stub stage finds the parameters it
/// reads (or has a default for them).
#[test]
fn bundled_manifests_satisfy_their_components() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests");
    let mut checked = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let manifest = load_manifest(&fs::read_to_string(&path).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mut runtime = Runtime::default();
        register_demo_stages(&mut runtime, &TraceSink::new());
        for result in runtime.load(&manifest) {
            if let Err(e) = result {
                panic!("{}: {e}", path.display());
            }
        }
        checked += 1;
    }
    assert!(checked >= 2);
}
