//! Replicate scheduling over a worker pool.
//!
//! Replicate `r` always draws from streams keyed by `(seed, r, ...)`, and
//! results are collected in replicate order, so outputs do not depend on the
//! number of workers or on completion order.

use loopsoup::{Error, Result};
use rayon::prelude::*;

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "LOOPSOUP_WORKERS";

pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f(r)` for every replicate `r` in `first..first + count`, in order.
pub fn map_replicates<T, F>(first: u64, count: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let workers = worker_count();
    if workers == 1 {
        return (first..first + count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    pool.install(|| (first..first + count).into_par_iter().map(f).collect())
}
