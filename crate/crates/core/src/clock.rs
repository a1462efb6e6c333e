//! Time source for the node loop.

use alloc::sync::Arc;

/// Milliseconds plus the ability to wait. Real clocks report wall time since
/// the Unix epoch; virtual clocks start wherever the simulation says.
pub trait Clock {
    fn now_ms(&self) -> u64;

    fn sleep_ms(&self, ms: u64);

    /// Called after each batch of fitness evaluations. Virtual clocks advance
    /// by the simulated cost of the work; real clocks ignore it.
    fn charge_evaluations(&self, _count: u64) {}
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
    fn sleep_ms(&self, ms: u64) {
        (**self).sleep_ms(ms)
    }
    fn charge_evaluations(&self, count: u64) {
        (**self).charge_evaluations(count)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
    fn sleep_ms(&self, ms: u64) {
        (**self).sleep_ms(ms)
    }
    fn charge_evaluations(&self, count: u64) {
        (**self).charge_evaluations(count)
    }
}
