//! Independent replications in parallel. Replication `i` gets the seed
//! `derive_seed(master, i)`, and results come back in index order, so the
//! output does not depend on the thread count.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::derive_seed;

pub fn replicate<T, F>(runs: u64, master: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..runs)
        .into_par_iter()
        .map(|i| f(derive_seed(master, i)))
        .collect()
}

/// As [`replicate`], on a pool of `jobs` threads (0 means rayon's default).
pub fn replicate_with_jobs<T, F>(runs: u64, master: u64, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| crate::Error::Parameter(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| replicate(runs, master, f))
}
