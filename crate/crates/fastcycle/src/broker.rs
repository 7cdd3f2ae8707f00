//! Dispatch engine: one scan thread plus a pool of worker threads.
//!
//! The scan thread waits for publishes (or timer deadlines), pops the head of
//! every idle subscriber's queue and hands it to the pool. A subscriber is
//! marked in flight until its callback returns, so one subscriber never runs
//! two callbacks at once and sees its envelopes in queue order, while
//! different subscribers run in parallel.

use std::cell::Cell;
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::{Arc, MutexGuard, PoisonError};
use std::thread::{self, JoinHandle, ThreadId};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};
use fastcycle_core::{Delivery, FixedRate, InvalidPeriod, ReadyTask, Timestamp};

use crate::bus::{Bus, BusState, Callback, CallbackResult, Shared};

thread_local! {
    static ON_WORKER: Cell<bool> = const { Cell::new(false) };
}

/// True when called from inside a broker worker (callback or serve context).
pub fn on_worker_thread() -> bool {
    ON_WORKER.with(Cell::get)
}

/// How the scan thread learns about new work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wakeup {
    /// Publishers and finishing tasks signal the scan thread.
    Notify,
    /// The scan thread rescans at this fixed interval.
    Poll(Duration),
    /// No scan thread; the owner calls [`Broker::dispatch_pending`].
    Manual,
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub worker_count: usize,
    pub wakeup: Wakeup,
    pub shutdown_drain_timeout: Duration,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            worker_count: thread::available_parallelism().map_or(1, |n| n.get()),
            wakeup: Wakeup::Notify,
            shutdown_drain_timeout: Duration::from_secs(10),
        }
    }
}

impl BrokerConfig {
    pub fn with_workers(worker_count: usize) -> Self {
        Self {
            worker_count,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BrokerError> {
        if self.worker_count == 0 {
            return Err(BrokerError::InvalidConfig(
                "worker_count must be at least 1".into(),
            ));
        }
        if let Wakeup::Poll(interval) = self.wakeup {
            if interval.is_zero() {
                return Err(BrokerError::InvalidConfig(
                    "poll interval must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    /// Stop accepting publishes, deliver everything queued, then shut down.
    Drain,
    /// Let running callbacks finish and discard what is still queued.
    Immediate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BrokerStats {
    /// Accepted publish calls.
    pub published: u64,
    /// Subscriber callbacks run to completion, failed ones included.
    pub dispatched: u64,
    /// Envelopes lost to drop policies, unsubscribes or an immediate stop.
    pub dropped: u64,
    /// Tasks handed to workers and not finished yet.
    pub in_flight: u64,
    /// Envelopes still waiting in subscriber queues.
    pub pending: u64,
    /// Callbacks that returned an error or panicked.
    pub failed: u64,
    /// Serve timer invocations run to completion.
    pub serve_runs: u64,
    /// Total time envelopes spent queued before a worker took them.
    pub queue_wait_total_ns: u64,
    pub queue_wait_max_ns: u64,
}

impl BrokerStats {
    pub fn queue_wait_mean_ns(&self) -> f64 {
        if self.dispatched == 0 {
            0.0
        } else {
            self.queue_wait_total_ns as f64 / self.dispatched as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BrokerError {
    #[error("a broker is already attached to this bus")]
    AlreadyStarted,
    #[error("invalid broker config: {0}")]
    InvalidConfig(String),
    #[error("broker is not running")]
    NotRunning,
    #[error("drain timed out with {remaining} envelopes undelivered")]
    DrainTimeout { remaining: u64, stats: BrokerStats },
    #[error("stop cannot be called from a broker worker")]
    CalledFromWorker,
    #[error(transparent)]
    InvalidPeriod(#[from] InvalidPeriod),
}

pub type ServeFn = Arc<dyn Fn() -> CallbackResult + Send + Sync>;

#[derive(Debug, Default)]
struct TimerCounters {
    ticks: AtomicU64,
    overruns: AtomicU64,
    last_fire_ns: AtomicI64,
}

/// Handle to a periodic serve registration.
#[derive(Clone)]
pub struct ServeTimer {
    id: u64,
    period: Duration,
    counters: Arc<TimerCounters>,
    shared: Arc<Shared>,
}

impl ServeTimer {
    pub fn period(&self) -> Duration {
        self.period
    }

    /// Serve invocations started so far.
    pub fn ticks(&self) -> u64 {
        self.counters.ticks.load(Ordering::Acquire)
    }

    /// Deadlines skipped because the previous serve was still running or the
    /// scan thread woke late.
    pub fn overruns(&self) -> u64 {
        self.counters.overruns.load(Ordering::Acquire)
    }

    /// Bus clock reading at the latest fire, if any.
    pub fn last_fire(&self) -> Option<Timestamp> {
        (self.ticks() > 0)
            .then(|| Timestamp::from_nanos(self.counters.last_fire_ns.load(Ordering::Acquire)))
    }

    pub fn cancel(&self) {
        let mut state = self.shared.lock();
        state.dispatch.timers.retain(|t| t.id != self.id);
    }
}

impl std::fmt::Debug for ServeTimer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ServeTimer")
            .field("period", &self.period)
            .field("ticks", &self.ticks())
            .field("overruns", &self.overruns())
            .finish()
    }
}

pub(crate) struct TimerSlot {
    id: u64,
    schedule: FixedRate,
    in_flight: bool,
    counters: Arc<TimerCounters>,
    run: ServeFn,
}

/// Broker bookkeeping kept inside the bus lock.
pub(crate) struct DispatchState {
    attached: bool,
    shutdown: bool,
    tasks_in_flight: u64,
    dispatched: u64,
    failed: u64,
    serve_runs: u64,
    queue_wait_total_ns: u64,
    queue_wait_max_ns: u64,
    epoch: Instant,
    timers: Vec<TimerSlot>,
    next_timer: u64,
}

impl DispatchState {
    pub(crate) fn busy(&self) -> bool {
        self.tasks_in_flight > 0
    }
}

impl Default for DispatchState {
    fn default() -> Self {
        Self {
            attached: false,
            shutdown: false,
            tasks_in_flight: 0,
            dispatched: 0,
            failed: 0,
            serve_runs: 0,
            queue_wait_total_ns: 0,
            queue_wait_max_ns: 0,
            epoch: Instant::now(),
            timers: Vec::new(),
            next_timer: 1,
        }
    }
}

enum Task {
    Deliver(ReadyTask<Callback>),
    Serve { timer: u64, run: ServeFn },
}

/// A running dispatch engine attached to one [`Bus`].
pub struct Broker {
    bus: Bus,
    config: BrokerConfig,
    tx: Option<Sender<Task>>,
    scan: Option<JoinHandle<()>>,
    workers: Vec<JoinHandle<()>>,
    running: bool,
}

impl Broker {
    /// Starts the scan thread and `worker_count` workers. Anything published
    /// on the bus before this call is dispatched once the threads are up.
    pub fn start(bus: &Bus, config: BrokerConfig) -> Result<Broker, BrokerError> {
        config.validate()?;
        {
            let mut state = bus.shared.lock();
            if state.dispatch.attached {
                return Err(BrokerError::AlreadyStarted);
            }
            state.dispatch.attached = true;
            state.dispatch.epoch = Instant::now();
        }

        let (tx, rx) = crossbeam_channel::unbounded::<Task>();
        let workers = (0..config.worker_count)
            .map(|i| {
                let shared = Arc::clone(&bus.shared);
                let rx = rx.clone();
                thread::Builder::new()
                    .name(format!("fastcycle-worker-{i}"))
                    .spawn(move || worker_loop(&shared, &rx))
                    .expect("spawn worker thread")
            })
            .collect();

        let scan = match config.wakeup {
            Wakeup::Manual => None,
            wakeup => {
                let shared = Arc::clone(&bus.shared);
                let tx = tx.clone();
                Some(
                    thread::Builder::new()
                        .name("fastcycle-scan".into())
                        .spawn(move || scan_loop(&shared, &tx, wakeup))
                        .expect("spawn scan thread"),
                )
            }
        };

        Ok(Broker {
            bus: bus.clone(),
            config,
            tx: Some(tx),
            scan,
            workers,
            running: true,
        })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn config(&self) -> &BrokerConfig {
        &self.config
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn scan_thread_id(&self) -> Option<ThreadId> {
        self.scan.as_ref().map(|h| h.thread().id())
    }

    pub fn worker_thread_ids(&self) -> Vec<ThreadId> {
        self.workers.iter().map(|h| h.thread().id()).collect()
    }

    /// One scan pass: submits the head of every idle subscriber queue and any
    /// due serve timers. Returns the number of subscriber tasks submitted.
    ///
    /// The scan thread calls this logic on its own; calling it directly is
    /// meant for [`Wakeup::Manual`].
    pub fn dispatch_pending(&self) -> usize {
        let Some(tx) = &self.tx else {
            return 0;
        };
        let tasks = {
            let mut state = self.bus.shared.lock();
            if state.dispatch.shutdown {
                return 0;
            }
            collect_tasks(&mut state, &self.bus.shared)
        };
        let delivered = tasks
            .iter()
            .filter(|t| matches!(t, Task::Deliver(_)))
            .count();
        for task in tasks {
            let _ = tx.send(task);
        }
        delivered
    }

    /// Registers `run` to be called every `period` on a worker thread.
    ///
    /// Deadlines are fixed-rate from the moment of scheduling. A deadline that
    /// arrives while the previous invocation is still running is skipped and
    /// counted as an overrun.
    pub fn schedule<F>(&self, period: Duration, run: F) -> Result<ServeTimer, BrokerError>
    where
        F: Fn() -> CallbackResult + Send + Sync + 'static,
    {
        schedule_on(&self.bus, period, Arc::new(run))
    }

    pub fn stats(&self) -> BrokerStats {
        stats_of(&self.bus.shared.lock())
    }

    pub fn stop(&mut self, mode: StopMode) -> Result<BrokerStats, BrokerError> {
        if on_worker_thread() {
            return Err(BrokerError::CalledFromWorker);
        }
        if !self.running {
            return Err(BrokerError::NotRunning);
        }
        self.running = false;
        let shared = Arc::clone(&self.bus.shared);

        let mut state = shared.lock();
        state.accepting = false;
        // wake publishers parked on a full blocking queue so they see Closed
        shared.progress.notify_all();

        let mut remaining = None;
        if mode == StopMode::Drain {
            let deadline = Instant::now() + self.config.shutdown_drain_timeout;
            loop {
                let outstanding = state.registry.pending() as u64 + state.dispatch.tasks_in_flight;
                if outstanding == 0 {
                    break;
                }
                let now = Instant::now();
                if now >= deadline {
                    remaining = Some(outstanding);
                    break;
                }
                if self.scan.is_none() {
                    drop(state);
                    self.dispatch_pending();
                    state = shared.lock();
                }
                state = shared
                    .progress
                    .wait_timeout(state, (deadline - now).min(Duration::from_millis(10)))
                    .unwrap_or_else(PoisonError::into_inner)
                    .0;
            }
        }

        state.dispatch.shutdown = true;
        state.dispatch.timers.clear();
        state.registry.clear_queues();
        while state.dispatch.tasks_in_flight > 0 {
            state = shared
                .progress
                .wait(state)
                .unwrap_or_else(PoisonError::into_inner);
        }
        let stats = stats_of(&state);
        drop(state);

        shared.work.notify_all();
        if let Some(scan) = self.scan.take() {
            let _ = scan.join();
        }
        self.tx = None;
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }

        match remaining {
            Some(remaining) => Err(BrokerError::DrainTimeout { remaining, stats }),
            None => Ok(stats),
        }
    }
}

impl Drop for Broker {
    fn drop(&mut self) {
        if self.running && !on_worker_thread() {
            let _ = self.stop(StopMode::Immediate);
        }
    }
}

impl std::fmt::Debug for Broker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Broker")
            .field("config", &self.config)
            .field("running", &self.running)
            .finish()
    }
}

pub(crate) fn schedule_on(
    bus: &Bus,
    period: Duration,
    run: ServeFn,
) -> Result<ServeTimer, BrokerError> {
    let period_ns = u64::try_from(period.as_nanos()).unwrap_or(u64::MAX);
    let mut state = bus.shared.lock();
    let start_ns = state.dispatch.epoch.elapsed().as_nanos() as u64;
    let schedule = FixedRate::new(start_ns, period_ns)?;
    let id = state.dispatch.next_timer;
    state.dispatch.next_timer += 1;
    let counters = Arc::new(TimerCounters::default());
    state.dispatch.timers.push(TimerSlot {
        id,
        schedule,
        in_flight: false,
        counters: Arc::clone(&counters),
        run,
    });
    drop(state);
    bus.shared.work.notify_one();
    Ok(ServeTimer {
        id,
        period,
        counters,
        shared: Arc::clone(&bus.shared),
    })
}

fn stats_of(state: &BusState) -> BrokerStats {
    let counters = state.registry.counters();
    BrokerStats {
        published: counters.published,
        dispatched: state.dispatch.dispatched,
        dropped: counters.dropped,
        in_flight: state.dispatch.tasks_in_flight,
        pending: state.registry.pending() as u64,
        failed: state.dispatch.failed,
        serve_runs: state.dispatch.serve_runs,
        queue_wait_total_ns: state.dispatch.queue_wait_total_ns,
        queue_wait_max_ns: state.dispatch.queue_wait_max_ns,
    }
}

fn collect_tasks(state: &mut BusState, shared: &Shared) -> Vec<Task> {
    let mut tasks = Vec::new();

    if !state.dispatch.timers.is_empty() {
        let now_ns = state.dispatch.epoch.elapsed().as_nanos() as u64;
        for slot in &mut state.dispatch.timers {
            let Some(due) = slot.schedule.poll(now_ns) else {
                continue;
            };
            if slot.in_flight {
                slot.counters
                    .overruns
                    .fetch_add(due.missed + 1, Ordering::AcqRel);
                continue;
            }
            slot.counters
                .overruns
                .fetch_add(due.missed, Ordering::AcqRel);
            slot.counters.ticks.fetch_add(1, Ordering::AcqRel);
            slot.counters
                .last_fire_ns
                .store(shared.clock.now().as_nanos(), Ordering::Release);
            slot.in_flight = true;
            tasks.push(Task::Serve {
                timer: slot.id,
                run: Arc::clone(&slot.run),
            });
        }
    }

    let ready = state.registry.take_ready();
    if !ready.is_empty() {
        let now = shared.clock.now();
        for task in &ready {
            let wait = (now - task.envelope.publish_ts).max(0) as u64;
            state.dispatch.queue_wait_total_ns += wait;
            state.dispatch.queue_wait_max_ns = state.dispatch.queue_wait_max_ns.max(wait);
        }
        tasks.extend(ready.into_iter().map(Task::Deliver));
    }

    state.dispatch.tasks_in_flight += tasks.len() as u64;
    tasks
}

fn next_timer_wait(state: &BusState) -> Option<Duration> {
    let next = state
        .dispatch
        .timers
        .iter()
        .map(|t| t.schedule.next_deadline_ns())
        .min()?;
    let now = state.dispatch.epoch.elapsed().as_nanos() as u64;
    Some(Duration::from_nanos(next.saturating_sub(now)))
}

fn scan_loop(shared: &Shared, tx: &Sender<Task>, wakeup: Wakeup) {
    let mut state = shared.lock();
    loop {
        if state.dispatch.shutdown {
            return;
        }
        let tasks = collect_tasks(&mut state, shared);
        if !tasks.is_empty() {
            drop(state);
            for task in tasks {
                let _ = tx.send(task);
            }
            state = shared.lock();
            continue;
        }
        let timer_wait = next_timer_wait(&state);
        state = match wakeup {
            Wakeup::Notify => match timer_wait {
                Some(wait) => {
                    shared
                        .work
                        .wait_timeout(state, wait)
                        .unwrap_or_else(PoisonError::into_inner)
                        .0
                }
                None => shared
                    .work
                    .wait(state)
                    .unwrap_or_else(PoisonError::into_inner),
            },
            Wakeup::Poll(interval) => {
                drop(state);
                thread::sleep(timer_wait.map_or(interval, |w| w.min(interval)));
                shared.lock()
            }
            Wakeup::Manual => unreachable!("manual mode has no scan thread"),
        };
    }
}

fn worker_loop(shared: &Shared, rx: &Receiver<Task>) {
    ON_WORKER.with(|w| w.set(true));
    while let Ok(task) = rx.recv() {
        match task {
            Task::Deliver(task) => {
                let ok = {
                    let envelope = match task.delivery {
                        Delivery::ZeroCopy => task.envelope,
                        Delivery::DeepCopy => task.envelope.deep_copied(),
                    };
                    let callback = task.callback;
                    run_guarded(|| callback(&envelope))
                };
                let mut state = shared.lock();
                state.registry.complete(task.subscriber);
                finish_task(&mut state);
                state.dispatch.dispatched += 1;
                if !ok {
                    state.dispatch.failed += 1;
                }
            }
            Task::Serve { timer, run } => {
                let ok = run_guarded(|| run());
                let mut state = shared.lock();
                if let Some(slot) = state.dispatch.timers.iter_mut().find(|t| t.id == timer) {
                    slot.in_flight = false;
                }
                finish_task(&mut state);
                state.dispatch.serve_runs += 1;
                if !ok {
                    state.dispatch.failed += 1;
                }
            }
        }
        shared.work.notify_one();
        shared.progress.notify_all();
    }
}

fn finish_task(state: &mut MutexGuard<'_, BusState>) {
    state.dispatch.tasks_in_flight -= 1;
}

fn run_guarded(f: impl FnOnce() -> CallbackResult) -> bool {
    matches!(panic::catch_unwind(AssertUnwindSafe(f)), Ok(Ok(())))
}
