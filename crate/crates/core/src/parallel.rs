//! Worker-count control for rayon-backed operations.

use crate::error::{Error, Result};

/// Environment variable capping the worker count when none is given.
pub const THREADS_ENV: &str = "FRACLAB_THREADS";

/// Resolves a requested worker count: explicit `Some(n)` wins, then
/// `FRACLAB_THREADS`, then rayon's default.
pub fn resolve_workers(requested: Option<usize>) -> Option<usize> {
    requested.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()))
        .filter(|&n| n > 0)
}

/// Runs `f` inside a dedicated pool of `workers` threads, or on the global
/// pool when `workers` is `None`.
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
