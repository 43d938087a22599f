//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) batch work is spread over the
//! rayon pool; without it, or with [`Execution::Sequential`], the same code
//! runs on the calling thread. Results are identical either way: every
//! reduction here is order-independent or re-sorted before returning.

use std::ops::Range;

/// How batch work should be scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

pub(crate) fn map_collect<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Smallest `(key, index)` over `range`, skipping indices where `f` yields
/// `None`. Ties on `key` go to the lowest index.
pub(crate) fn min_over_range<K, F>(exec: Execution, range: Range<u64>, f: F) -> Option<(K, u64)>
where
    K: Ord + Send,
    F: Fn(u64) -> Option<K> + Sync + Send,
{
    let pick = |a: Option<(K, u64)>, b: Option<(K, u64)>| match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(if (&a.0, a.1) <= (&b.0, b.1) { a } else { b }),
    };
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            range
                .into_par_iter()
                .filter_map(|i| f(i).map(|k| (k, i)))
                .map(Some)
                .reduce(|| None, pick)
        }
        _ => range
            .filter_map(|i| f(i).map(|k| (k, i)))
            .map(Some)
            .fold(None, pick),
    }
}
