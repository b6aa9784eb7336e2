//! Ordered map over independent work items.
//!
//! With the `parallel` feature the work is spread over the rayon pool;
//! without it (or when a caller asks for sequential execution) items are
//! processed in order on the current thread. Results always come back in
//! input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How independent work items are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// `Parallel` only when the crate was built with rayon support.
    pub fn effective(self) -> ExecMode {
        if cfg!(feature = "parallel") {
            self
        } else {
            ExecMode::Sequential
        }
    }
}

/// Applies `f` to every item and returns the results in input order.
pub fn map_ordered<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode.effective() {
        ExecMode::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter().map(f).collect(),
        #[cfg(not(feature = "parallel"))]
        ExecMode::Parallel => unreachable!("effective() downgrades without rayon"),
    }
}

/// Like [`map_ordered`], with at most `limit` items in flight at once
/// (items are taken in consecutive batches).
pub fn map_ordered_bounded<T, R, F>(items: &[T], mode: ExecMode, limit: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let mut out = Vec::with_capacity(items.len());
    for batch in items.chunks(limit.max(1)) {
        out.extend(map_ordered(batch, mode, &f));
    }
    out
}
