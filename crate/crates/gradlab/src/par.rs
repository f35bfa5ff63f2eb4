//! Data-parallel helpers with a sequential fallback.
//!
//! Everything hot in this crate is embarrassingly parallel: independent
//! Dirichlet solves, per-configuration observable reductions, per-site
//! checkerboard updates. These helpers run those loops through rayon when the
//! `parallel` feature is enabled and fall back to plain iteration otherwise.
//! Outputs are collected in input order and reduced sequentially, so results
//! are bit-identical no matter the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn par_map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Map `f` over a slice, collecting results in input order.
pub fn par_map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Write `f(i)` into `out[i]` for every index of `out`.
pub fn par_fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut()
            .enumerate()
            .for_each(|(i, slot)| *slot = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }
}

/// In-place update `slice[i] = f(i, slice[i])` over the whole slice.
pub fn par_update<T, F>(slice: &mut [T], f: F)
where
    T: Send + Copy,
    F: Fn(usize, T) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        slice
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, slot)| *slot = f(i, *slot));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, slot) in slice.iter_mut().enumerate() {
            *slot = f(i, *slot);
        }
    }
}

/// Number of worker threads the parallel build will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Configure the global thread pool. Call once at startup; later calls are
/// ignored (rayon only honors the first initialization).
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}
