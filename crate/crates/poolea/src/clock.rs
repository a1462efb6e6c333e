//! Real and virtual clocks.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use poolea_core::Clock;

/// Wall-clock time since the Unix epoch. An optional per-evaluation delay
/// emulates a slower machine.
#[derive(Clone, Debug, Default)]
pub struct SystemClock {
    slowdown_us_per_eval: f64,
}

impl SystemClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_slowdown(slowdown_us_per_eval: f64) -> Self {
        Self {
            slowdown_us_per_eval: slowdown_us_per_eval.max(0.0),
        }
    }
}

pub fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        unix_ms()
    }

    fn sleep_ms(&self, ms: u64) {
        thread::sleep(Duration::from_millis(ms));
    }

    fn charge_evaluations(&self, count: u64) {
        if self.slowdown_us_per_eval > 0.0 {
            let us = (count as f64 * self.slowdown_us_per_eval) as u64;
            thread::sleep(Duration::from_micros(us));
        }
    }
}

/// Simulated time in microseconds. Sleeping advances it instantly and each
/// fitness evaluation costs `eval_cost_us`. Clones share the same reading.
#[derive(Clone, Debug)]
pub struct VirtualClock {
    now_us: Arc<AtomicU64>,
    eval_cost_us: f64,
}

impl VirtualClock {
    pub fn new(eval_cost_us: f64) -> Self {
        Self {
            now_us: Arc::new(AtomicU64::new(0)),
            eval_cost_us: eval_cost_us.max(0.0),
        }
    }

    pub fn now_us(&self) -> u64 {
        self.now_us.load(Ordering::SeqCst)
    }

    pub fn advance_us(&self, us: u64) {
        self.now_us.fetch_add(us, Ordering::SeqCst);
    }

    pub fn set_ms(&self, ms: u64) {
        self.now_us.store(ms * 1000, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now_us() / 1000
    }

    fn sleep_ms(&self, ms: u64) {
        self.advance_us(ms * 1000);
    }

    fn charge_evaluations(&self, count: u64) {
        self.advance_us((count as f64 * self.eval_cost_us).round() as u64);
    }
}
