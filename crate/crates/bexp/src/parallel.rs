//! Shared rayon pool, sized by the `BE_THREADS` environment variable.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

/// Runs `op` on the crate's thread pool. The pool is created on first use
/// with `BE_THREADS` workers (default: available parallelism).
pub fn install<R: Send>(op: impl FnOnce() -> R + Send) -> R {
    let pool = POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("BE_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder
            .build()
            .expect("failed to build bexp worker pool")
    });
    pool.install(op)
}
