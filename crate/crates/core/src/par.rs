//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in index order, so callers that reduce the
//! output sequentially get bit-identical answers for any worker count. With
//! the `parallel` feature disabled, [`Parallelism::Parallel`] silently runs
//! sequentially.

/// Execution mode for the embarrassingly parallel loops in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

impl Parallelism {
    /// Whether this mode will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Applies `f(chunk_index, chunk)` to consecutive `chunk_len`-sized chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, mode: Parallelism, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    assert!(chunk_len > 0, "chunk length must be positive");
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = mode;
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Pairwise (cascade) reduction in index order.
///
/// The reduction tree depends only on `items.len()`, never on scheduling.
pub fn pairwise_reduce<T: Clone>(items: &[T], combine: &impl Fn(&T, &T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (left, right) = items.split_at(n / 2);
            let l = pairwise_reduce(left, combine)?;
            let r = pairwise_reduce(right, combine)?;
            Some(combine(&l, &r))
        }
    }
}
