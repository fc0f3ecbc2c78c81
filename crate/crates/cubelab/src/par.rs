//! Execution helpers shared by the numeric kernels.
//!
//! Reductions are chunked with a fixed chunk size and the partial results are
//! combined in index order, so a parallel run produces bit-identical output to
//! a sequential one regardless of the worker count.

/// Chunk size used for deterministic partitioned reductions.
pub const CHUNK: usize = 1 << 14;

/// Whether this build routes kernels through the thread pool by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Parallel,
    Sequential,
}

impl Exec {
    /// Default execution mode for the current feature set.
    pub fn auto() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

/// Sum of `f` over fixed-size chunks of `0..len`, combined in chunk order.
pub fn indexed_sum<F>(len: usize, exec: Exec, f: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync,
{
    let ranges: Vec<std::ops::Range<usize>> = (0..len)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(len))
        .collect();
    let partials = map_ordered(&ranges, exec, |r| f(r.clone()));
    partials.into_iter().sum()
}

/// Ordered map over a slice; parallel when requested and available.
pub fn map_ordered<T, U, F>(items: &[T], exec: Exec, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(|t| f(t)).collect();
        }
    }
    let _ = exec;
    items.iter().map(|t| f(t)).collect()
}

/// Apply `f` to disjoint mutable chunks of `data`.
pub fn for_each_chunk_mut<F>(data: &mut [f64], chunk: usize, exec: Exec, f: F)
where
    F: Fn(&mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec == Exec::Parallel {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk).for_each(|c| f(c));
            return;
        }
    }
    let _ = exec;
    data.chunks_mut(chunk).for_each(|c| f(c));
}
