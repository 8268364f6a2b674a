//! Replication fan-out.
//!
//! With the `parallel` feature (on by default) replications run on the rayon
//! global pool; without it they run in order on the calling thread. Both paths
//! return results in replication order, so downstream aggregation sees the same
//! sequence either way.

/// Evaluates `f(0), f(1), ..., f(n - 1)` and returns the results in order.
#[cfg(feature = "parallel")]
pub fn replicate<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn replicate<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Sequential reference path, always available.
pub fn replicate_sequential<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runs `f` on a pool limited to `jobs` threads. Without the `parallel`
/// feature the limit is ignored.
#[cfg(feature = "parallel")]
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<T: Send>(_jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    f()
}
