//! Data-parallel helpers with a deterministic reduction order.
//!
//! Every sum is computed over fixed-size chunks of the index range and the
//! chunk partials are added in index order, so results are bit-identical
//! across thread counts and between the parallel and sequential paths.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Once;

use num_complex::Complex64;

/// Environment variable that caps the size of the worker pool.
pub const THREADS_ENV: &str = "QGHAAR_THREADS";

const CHUNK: usize = 64;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);
static POOL_INIT: Once = Once::new();

/// Forces the sequential path at runtime (used by benches to compare).
pub fn set_sequential(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::Relaxed)
}

/// Parses the thread cap from the environment; `None` when unset or invalid.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
}

/// Builds the global pool honoring `QGHAAR_THREADS`. Called lazily by every
/// parallel helper; calling it explicitly is only needed to fix the pool early.
pub fn init_pool() {
    POOL_INIT.call_once(|| {
        #[cfg(feature = "parallel")]
        if let Some(k) = threads_from_env() {
            // An already-built global pool is fine; the cap is then ignored.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
    });
}

/// Number of worker threads that parallel helpers will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        if is_parallel() {
            init_pool();
            return rayon::current_num_threads();
        }
    }
    1
}

/// `(0..n).map(f).collect()`, in parallel when enabled. Output order is the index order.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if is_parallel() && n > 1 {
            use rayon::prelude::*;
            init_pool();
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Σ_{i<n} f(i) with a fixed, thread-independent summation order.
pub fn sum<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let hi = ((c + 1) * CHUNK).min(n);
        (c * CHUNK..hi).fold(Complex64::new(0.0, 0.0), |acc, i| acc + f(i))
    };
    if chunks <= 1 {
        return (0..chunks).map(partial).sum();
    }
    map(chunks, partial).into_iter().sum()
}

/// Real-valued variant of [`sum`].
pub fn sum_re<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    sum(n, |i| Complex64::new(f(i), 0.0)).re
}
