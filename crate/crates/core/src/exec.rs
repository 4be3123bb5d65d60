//! Execution strategy for embarrassingly parallel loops.
//!
//! Replications, multistarts and per-`c1` sweeps are independent. Each is keyed by its index, so
//! results are identical whether the loop runs on the rayon pool or sequentially. Without the
//! `parallel` feature every strategy runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// `(0..n).map(f).collect()` under the requested strategy, in index order.
pub fn map_indices<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Runs `f` with at most `jobs` worker threads. `None` keeps the global pool.
pub fn with_jobs<T, F>(jobs: Option<usize>, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(j) = jobs {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            return pool.install(f);
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    f()
}
