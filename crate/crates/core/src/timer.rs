//! Fixed-rate deadline bookkeeping for serve timers.
//!
//! Deadlines advance by whole periods from the start time, never from when
//! the previous serve finished, so a slow serve does not shift later fires.

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("timer period must be positive")]
pub struct InvalidPeriod;

/// Outcome of polling a schedule whose deadline has passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Due {
    /// The deadline being served.
    pub deadline_ns: u64,
    /// Earlier deadlines that passed without a chance to fire.
    pub missed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedRate {
    period_ns: u64,
    next_ns: u64,
}

impl FixedRate {
    /// First deadline is one period after `start_ns`.
    pub fn new(start_ns: u64, period_ns: u64) -> Result<Self, InvalidPeriod> {
        if period_ns == 0 {
            return Err(InvalidPeriod);
        }
        Ok(Self {
            period_ns,
            next_ns: start_ns.saturating_add(period_ns),
        })
    }

    pub fn period_ns(&self) -> u64 {
        self.period_ns
    }

    pub fn next_deadline_ns(&self) -> u64 {
        self.next_ns
    }

    /// Returns the most recent passed deadline, if any, and moves the next
    /// deadline to the first one strictly after `now_ns`.
    pub fn poll(&mut self, now_ns: u64) -> Option<Due> {
        if now_ns < self.next_ns {
            return None;
        }
        let passed = (now_ns - self.next_ns) / self.period_ns + 1;
        let deadline_ns = self.next_ns + (passed - 1) * self.period_ns;
        self.next_ns += passed * self.period_ns;
        Some(Due {
            deadline_ns,
            missed: passed - 1,
        })
    }
}
