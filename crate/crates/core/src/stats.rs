//! Latency and round-trip statistics.
//!
//! A [`Sample`] holds two readings of the same monotonic clock. Its duration
//! is the one-way latency in latency runs and the round-trip time in echo
//! runs. Jitter is the population standard deviation of those durations.

use alloc::vec::Vec;

use crate::clock::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    /// Message index within the run.
    pub index: u64,
    /// Publication time (ping publication in echo runs).
    pub t_pub: Timestamp,
    /// Reception time (echo reception in echo runs).
    pub t_recv: Timestamp,
}

impl Sample {
    pub fn new(index: u64, t_pub: Timestamp, t_recv: Timestamp) -> Self {
        Self {
            index,
            t_pub,
            t_recv,
        }
    }

    pub fn duration_ns(&self) -> i64 {
        self.t_recv - self.t_pub
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub size_bytes: usize,
    pub n_effective: usize,
    pub mean_us: f64,
    /// Population standard deviation, i.e. the jitter.
    pub std_us: f64,
    pub min_us: f64,
    pub max_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
}

/// 1-based nearest rank for percentile `p` (in percent) of `n` values.
pub fn nearest_rank(p: u32, n: usize) -> usize {
    let rank = (p as usize * n).div_ceil(100);
    rank.clamp(1, n)
}

pub fn compute_stats(size_bytes: usize, samples: &[Sample]) -> Result<StatsSummary, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples(samples.len()));
    }

    // Welford's update keeps the variance numerically stable in one pass.
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    let mut durations: Vec<i64> = Vec::with_capacity(samples.len());
    for (k, sample) in samples.iter().enumerate() {
        let d = sample.duration_ns();
        durations.push(d);
        let x = d as f64;
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    let n = samples.len();
    let variance = (m2 / n as f64).max(0.0);

    let p50 = select_rank(&mut durations, nearest_rank(50, n));
    let p99 = select_rank(&mut durations, nearest_rank(99, n));
    let min = *durations.iter().min().expect("non-empty");
    let max = *durations.iter().max().expect("non-empty");

    Ok(StatsSummary {
        size_bytes,
        n_effective: n,
        mean_us: mean / 1e3,
        std_us: libm::sqrt(variance) / 1e3,
        min_us: min as f64 / 1e3,
        max_us: max as f64 / 1e3,
        p50_us: p50 as f64 / 1e3,
        p99_us: p99 as f64 / 1e3,
    })
}

fn select_rank(values: &mut [i64], rank: usize) -> i64 {
    *values.select_nth_unstable(rank - 1).1
}
