//! Deterministic parallel reductions over path indices.
//!
//! Work is cut into fixed-size chunks of consecutive indices; each chunk is
//! reduced sequentially and chunk results are returned in index order, so
//! the outcome does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Paths per work unit.
pub const CHUNK: usize = 64;

/// Run `f` on a dedicated pool of `threads` workers (`None`: rayon default).
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `f(start..end)` for consecutive chunks of `0..total`, in chunk order.
pub fn map_chunks<T, F>(total: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let chunks = total.div_ceil(CHUNK);
    (0..chunks).into_par_iter().map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(total))).collect()
}

/// `f(i)` for every index, returned in index order.
pub fn map_indices<T, F>(total: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..total).into_par_iter().map(f).collect()
}
