//! Data-parallel helpers with a sequential fallback.
//!
//! Every parallel reduction in the crate goes through [`map_indices`]: the
//! per-index results are collected in index order and then folded
//! sequentially, so results are bit-identical for any thread count and with
//! the `parallel` feature disabled.

/// Evaluates `f` on `0..n`, returning results in index order.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Evaluates `f` on `0..n`, returning results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Applies `f` to every item of `items` (possibly in parallel), keeping order.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_indices(items.len(), |i| f(&items[i]))
}

/// Applies `f(index, chunk)` to consecutive `chunk`-sized pieces of `buf`,
/// returning the per-chunk results in order.
#[cfg(feature = "parallel")]
pub fn map_chunks_mut<T, F>(buf: &mut [f64], chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut [f64]) -> T + Sync + Send,
{
    use rayon::prelude::*;
    buf.par_chunks_mut(chunk.max(1)).enumerate().map(|(i, c)| f(i, c)).collect()
}

/// Applies `f(index, chunk)` to consecutive `chunk`-sized pieces of `buf`,
/// returning the per-chunk results in order.
#[cfg(not(feature = "parallel"))]
pub fn map_chunks_mut<T, F>(buf: &mut [f64], chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut [f64]) -> T + Sync + Send,
{
    buf.chunks_mut(chunk.max(1)).enumerate().map(|(i, c)| f(i, c)).collect()
}

/// Runs `op` on a dedicated pool with `threads` workers (`None` keeps the
/// global pool). Without the `parallel` feature this simply calls `op`.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        },
        None => op(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: Option<usize>, op: impl FnOnce() -> R + Send) -> R {
    op()
}

/// Whether this build was compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Sum in index order. Kept separate so the fold order is explicit.
pub(crate) fn ordered_sum(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, v| acc + v)
}
