//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel loop in the crate goes through [`map_range`] or
//! [`for_each_chunk_mut`]. Each index is computed independently and results
//! are collected in index order, so output is bit-identical whichever policy
//! runs it. Without the `parallel` feature both policies execute sequentially.

use std::cell::Cell;

/// How data-parallel loops are executed on the current thread.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Sequential,
    Parallel,
}

thread_local! {
    static POLICY: Cell<Option<Policy>> = const { Cell::new(None) };
}

/// Policy in effect on this thread.
pub fn current() -> Policy {
    POLICY.with(|p| p.get()).unwrap_or(if cfg!(feature = "parallel") {
        Policy::Parallel
    } else {
        Policy::Sequential
    })
}

/// Runs `f` with `policy` installed on the calling thread.
pub fn with_policy<R>(policy: Policy, f: impl FnOnce() -> R) -> R {
    let prev = POLICY.with(|p| p.replace(Some(policy)));
    let out = f();
    POLICY.with(|p| p.set(prev));
    out
}

/// Configures the global worker pool. A no-op without the `parallel` feature.
pub fn init_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

/// `(0..n).map(f).collect()`, parallel when the policy allows and `n` is at
/// least `min_len`.
pub fn map_range<T, F>(n: usize, min_len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if current() == Policy::Parallel && n >= min_len {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = min_len;
    (0..n).map(f).collect()
}

/// Calls `f(chunk_index, chunk)` on consecutive `chunk`-sized pieces of `out`.
pub fn for_each_chunk_mut<T, F>(out: &mut [T], chunk: usize, min_chunks: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if current() == Policy::Parallel && out.len() / chunk >= min_chunks {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = min_chunks;
    for (i, c) in out.chunks_mut(chunk).enumerate() {
        f(i, c);
    }
}
