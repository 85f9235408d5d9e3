//! Execution mode switch.
//!
//! Kernels may split work across rayon threads, but only over independent
//! output elements; every reduction runs in a fixed order on one thread. The
//! single-threaded mode therefore produces the same bits and exists to make
//! runs easy to reason about (and to keep test timings stable).

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

/// Environment variable that forces single-threaded execution when set to a
/// non-empty value other than `0`.
pub const SINGLE_THREAD_ENV: &str = "NEXTFRAME_SINGLE_THREAD";

static SINGLE_THREAD: AtomicBool = AtomicBool::new(false);
static ENV_CHECKED: std::sync::Once = std::sync::Once::new();

pub fn set_single_threaded(on: bool) {
    ENV_CHECKED.call_once(|| {});
    SINGLE_THREAD.store(on, Ordering::SeqCst);
}

pub fn single_threaded() -> bool {
    ENV_CHECKED.call_once(|| {
        if let Ok(v) = std::env::var(SINGLE_THREAD_ENV) {
            if !v.is_empty() && v != "0" {
                SINGLE_THREAD.store(true, Ordering::SeqCst);
            }
        }
    });
    SINGLE_THREAD.load(Ordering::SeqCst)
}

/// Maps `f` over `0..n`, in parallel unless single-threaded mode is on.
/// Results come back in index order either way.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if n < 2 || single_threaded() {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Runs `f` on consecutive `chunk`-sized pieces of `out`, passing each
/// piece's index.
pub fn for_each_chunk<T, F>(out: &mut [T], chunk: usize, work_hint: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    if work_hint < (1 << 15) || single_threaded() {
        out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}
