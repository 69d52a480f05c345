//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the batch helpers fan out over rayon;
//! without it every call runs sequentially. Both paths return results in index
//! order, and reductions are always performed sequentially over that order, so
//! numerical results never depend on the thread count.

/// Requested execution strategy for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether this request will actually fan out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluate `f(i)` for `i in 0..n`, returning results in index order.
pub fn map_indices<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Evaluate `f` on every element of `items`, returning results in order.
pub fn map_slice<S, T, F>(items: &[S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    map_indices(items.len(), exec, |i| f(&items[i]))
}

/// Environment variable capping the worker count of experiment-level fan-out.
pub const THREADS_ENV: &str = "GOLDMINE_THREADS";

/// Parse the thread cap from [`THREADS_ENV`], ignoring unparsable or zero values.
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run `f` inside a worker pool limited to `cap` threads (global pool if `None`).
pub fn with_thread_cap<R, F>(cap: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = cap {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            return pool.install(f);
        }
    }
    let _ = cap;
    f()
}
