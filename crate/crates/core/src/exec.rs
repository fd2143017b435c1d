//! Execution strategy for embarrassingly parallel loops.
//!
//! The core stays single-threaded and `no_std`; a threaded implementation
//! lives in the companion crate. Every caller derives per-item seeds from
//! the item index, so any executor produces identical results.

use alloc::vec::Vec;

pub trait Executor: Sync {
    /// Evaluates `f(0), ..., f(n - 1)` and returns the results in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Monotonic wall clock in seconds, supplied by the host.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock for hosts without a time source; all runtimes read as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}
