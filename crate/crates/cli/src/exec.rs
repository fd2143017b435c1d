use std::time::Instant;

use lgc_regime::exec::{Clock, Executor};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "LGC_REGIME_THREADS";

/// Runs independent work units on a rayon pool.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `threads == 0` lets rayon pick one thread per core.
    pub fn new(threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::validation(format!("cannot start thread pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Thread count from the environment, defaulting to all cores.
    pub fn from_env() -> Result<Self> {
        Self::new(threads_from_env()?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map_err(|_| CliError::validation(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))
        }
        _ => Ok(0),
    }
}

impl Executor for RayonExecutor {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

/// Wall clock measured from construction.
pub struct StdClock(Instant);

impl Default for StdClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
