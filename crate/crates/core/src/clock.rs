use core::fmt;
use core::ops::Sub;
use core::sync::atomic::{AtomicI64, Ordering};

/// Monotonic time in nanoseconds since an arbitrary per-clock origin.
///
/// Only differences between two readings of the same clock are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_nanos(ns: i64) -> Self {
        Self(ns)
    }

    pub const fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn saturating_add_nanos(self, ns: i64) -> Self {
        Self(self.0.saturating_add(ns))
    }
}

impl Sub for Timestamp {
    type Output = i64;

    fn sub(self, rhs: Self) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Source of monotonic timestamps shared by publishers and subscribers.
pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicI64,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self {
            now: AtomicI64::new(start.as_nanos()),
        }
    }

    pub fn set(&self, ts: Timestamp) {
        self.now.store(ts.as_nanos(), Ordering::SeqCst);
    }

    pub fn advance(&self, ns: i64) -> Timestamp {
        Timestamp(self.now.fetch_add(ns, Ordering::SeqCst) + ns)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.now.load(Ordering::SeqCst))
    }
}
