use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use fastcycle_core::{MessageEnvelope, Scope};

use super::{
    Component, ComponentDescriptor, ComponentError, ComponentHandle, ComponentState, InitContext,
    Manifest, Status,
};
use crate::broker::{
    schedule_on, Broker, BrokerConfig, BrokerError, BrokerStats, ServeTimer, StopMode,
};
use crate::bus::{Bus, CallbackError, CallbackResult};

pub type ComponentFactory = Arc<dyn Fn(&ComponentDescriptor) -> Box<dyn Component> + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("no factory registered for component `{0}`")]
    UnknownComponent(String),
    #[error("component `{0}` is already registered")]
    DuplicateComponentName(String),
    #[error("component `{name}` failed to initialise: {reason}")]
    InitFailed {
        name: String,
        reason: String,
        handle: Box<ComponentHandle>,
    },
    #[error("serve period must be positive")]
    InvalidPeriod,
    #[error("runtime or component `{0}` is not running")]
    NotRunning(String),
    #[error("runtime is already running")]
    AlreadyRunning,
    #[error(transparent)]
    Broker(#[from] BrokerError),
}

struct Cell {
    instance: Mutex<Box<dyn Component>>,
    status: Arc<Status>,
}

impl Cell {
    fn lock(&self) -> MutexGuard<'_, Box<dyn Component>> {
        self.instance.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` against the component if it is running, quarantining it on
    /// error or panic.
    fn invoke(
        &self,
        f: impl FnOnce(&mut dyn Component) -> Result<(), ComponentError>,
    ) -> CallbackResult {
        if self.status.get() != ComponentState::Running {
            return Ok(());
        }
        let mut instance = self.lock();
        // re-check under the lock: a sibling task may have failed it meanwhile
        if self.status.get() != ComponentState::Running {
            return Ok(());
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| f(instance.as_mut())));
        let reason = match outcome {
            Ok(Ok(())) => return Ok(()),
            Ok(Err(err)) => err.0,
            Err(_) => "panicked".to_owned(),
        };
        self.status.fail(reason.clone());
        Err(CallbackError(reason))
    }
}

struct Slot {
    handle: ComponentHandle,
    descriptor: ComponentDescriptor,
    cell: Option<Arc<Cell>>,
    shut_down: bool,
}

/// Hosts components on one bus and drives their lifecycle.
pub struct Runtime {
    bus: Bus,
    factories: HashMap<String, ComponentFactory>,
    slots: Vec<Slot>,
    broker: Option<Broker>,
    timers: Vec<(String, ServeTimer)>,
}

impl Default for Runtime {
    fn default() -> Self {
        Self::new(Bus::new())
    }
}

impl Runtime {
    pub fn new(bus: Bus) -> Self {
        Self {
            bus,
            factories: HashMap::new(),
            slots: Vec::new(),
            broker: None,
            timers: Vec::new(),
        }
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn broker(&self) -> Option<&Broker> {
        self.broker.as_ref()
    }

    pub fn is_running(&self) -> bool {
        self.broker.as_ref().is_some_and(Broker::is_running)
    }

    pub fn register_factory<F>(&mut self, name: impl Into<String>, factory: F)
    where
        F: Fn(&ComponentDescriptor) -> Box<dyn Component> + Send + Sync + 'static,
    {
        self.factories.insert(name.into(), Arc::new(factory));
    }

    /// Instantiates the component named by `descriptor` through its factory
    /// and initialises it.
    pub fn register_component(
        &mut self,
        descriptor: ComponentDescriptor,
    ) -> Result<ComponentHandle, RuntimeError> {
        let factory = self
            .factories
            .get(&descriptor.name)
            .cloned()
            .ok_or_else(|| RuntimeError::UnknownComponent(descriptor.name.clone()))?;
        self.register_component_with(descriptor, |d| factory(d))
    }

    pub fn register_component_with<F>(
        &mut self,
        descriptor: ComponentDescriptor,
        factory: F,
    ) -> Result<ComponentHandle, RuntimeError>
    where
        F: FnOnce(&ComponentDescriptor) -> Box<dyn Component>,
    {
        if self
            .slots
            .iter()
            .any(|s| s.descriptor.name == descriptor.name)
        {
            return Err(RuntimeError::DuplicateComponentName(descriptor.name));
        }

        let status = Arc::new(Status::new());
        let mut handle = ComponentHandle {
            name: descriptor.name.clone(),
            descriptor: descriptor.clone(),
            publishers: Vec::new(),
            subscriptions: Vec::new(),
            status: Arc::clone(&status),
        };

        let mut instance = factory(&descriptor);
        let mut ctx = InitContext::new(&descriptor, &self.bus);
        let init = panic::catch_unwind(AssertUnwindSafe(|| instance.init(&mut ctx)));
        let (publishers, subscriptions) = ctx.into_declarations();
        let failure = match init {
            Ok(Ok(())) => None,
            Ok(Err(err)) => Some(err.0),
            Err(_) => Some("init panicked".to_owned()),
        };
        if let Some(reason) = failure {
            status.fail(reason.clone());
            self.slots.push(Slot {
                handle: handle.clone(),
                descriptor,
                cell: None,
                shut_down: true,
            });
            return Err(RuntimeError::InitFailed {
                name: handle.name.clone(),
                reason,
                handle: Box::new(handle),
            });
        }

        let cell = Arc::new(Cell {
            instance: Mutex::new(instance),
            status: Arc::clone(&status),
        });
        for (topic, options) in subscriptions {
            let cell = Arc::clone(&cell);
            let id = self.bus.subscribe_scope(
                Scope::Topic(topic),
                options,
                Arc::new(move |env: &MessageEnvelope| cell.invoke(|c| c.on_message(env))),
            );
            handle.subscriptions.push(id);
        }
        handle.publishers = publishers;
        status.advance(ComponentState::Initialized);

        let running = self.is_running();
        let serve_period = descriptor.serve_period;
        self.slots.push(Slot {
            handle: handle.clone(),
            descriptor,
            cell: Some(cell),
            shut_down: false,
        });
        if running {
            status.advance(ComponentState::Running);
            if let Some(period) = serve_period {
                self.schedule_serve(&handle, period)?;
            }
        }
        Ok(handle)
    }

    /// Registers every active component of a manifest, in order. A failure
    /// of one component does not stop the others from being registered.
    pub fn load(&mut self, manifest: &Manifest) -> Vec<Result<ComponentHandle, RuntimeError>> {
        manifest
            .active
            .iter()
            .cloned()
            .map(|d| self.register_component(d))
            .collect()
    }

    pub fn handles(&self) -> Vec<ComponentHandle> {
        self.slots.iter().map(|s| s.handle.clone()).collect()
    }

    pub fn handle(&self, name: &str) -> Option<ComponentHandle> {
        self.slots
            .iter()
            .find(|s| s.handle.name == name)
            .map(|s| s.handle.clone())
    }

    /// Handles in the given state.
    pub fn handles_in(&self, state: ComponentState) -> Vec<ComponentHandle> {
        self.slots
            .iter()
            .filter(|s| s.handle.state() == state)
            .map(|s| s.handle.clone())
            .collect()
    }

    /// Starts the broker, moves initialised components to running and arms
    /// serve timers for components whose descriptor has a period.
    pub fn start(&mut self, config: BrokerConfig) -> Result<(), RuntimeError> {
        if self.broker.is_some() {
            return Err(RuntimeError::AlreadyRunning);
        }
        for slot in &self.slots {
            slot.handle.status.advance(ComponentState::Running);
        }
        self.broker = Some(Broker::start(&self.bus, config)?);
        let periodic: Vec<(ComponentHandle, Duration)> = self
            .slots
            .iter()
            .filter_map(|s| s.descriptor.serve_period.map(|p| (s.handle.clone(), p)))
            .filter(|(h, _)| h.state() == ComponentState::Running)
            .collect();
        for (handle, period) in periodic {
            self.schedule_serve(&handle, period)?;
        }
        Ok(())
    }

    /// Calls the component's `serve` every `period` on a worker thread.
    pub fn schedule_serve(
        &mut self,
        handle: &ComponentHandle,
        period: Duration,
    ) -> Result<ServeTimer, RuntimeError> {
        if period.is_zero() {
            return Err(RuntimeError::InvalidPeriod);
        }
        if !self.is_running() || handle.state() != ComponentState::Running {
            return Err(RuntimeError::NotRunning(handle.name.clone()));
        }
        let cell = self
            .slots
            .iter()
            .find(|s| s.handle.name == handle.name)
            .and_then(|s| s.cell.clone())
            .ok_or_else(|| RuntimeError::NotRunning(handle.name.clone()))?;
        let timer = schedule_on(
            &self.bus,
            period,
            Arc::new(move || cell.invoke(|c| c.serve())),
        )?;
        self.timers.push((handle.name.clone(), timer.clone()));
        Ok(timer)
    }

    /// Serve timers armed for the named component.
    pub fn serve_timers(&self, name: &str) -> Vec<ServeTimer> {
        self.timers
            .iter()
            .filter(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .collect()
    }

    /// Stops the broker, then calls `shutdown` once on every component that
    /// initialised successfully.
    pub fn stop(&mut self, mode: StopMode) -> Result<BrokerStats, RuntimeError> {
        let mut broker = self
            .broker
            .take()
            .ok_or_else(|| RuntimeError::NotRunning("runtime".into()))?;
        for (_, timer) in self.timers.drain(..) {
            timer.cancel();
        }
        let stats = broker.stop(mode);
        for slot in &mut self.slots {
            if slot.shut_down {
                continue;
            }
            slot.shut_down = true;
            if let Some(cell) = &slot.cell {
                let mut instance = cell.lock();
                let _ = panic::catch_unwind(AssertUnwindSafe(|| instance.shutdown()));
            }
            slot.handle.status.advance(ComponentState::Stopped);
        }
        Ok(stats?)
    }
}

impl Drop for Runtime {
    fn drop(&mut self) {
        if self.broker.is_some() && !crate::broker::on_worker_thread() {
            let _ = self.stop(StopMode::Immediate);
        }
    }
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("components", &self.slots.len())
            .field("running", &self.is_running())
            .finish()
    }
}
