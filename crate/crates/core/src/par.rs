//! Data-parallel helpers. With the `parallel` feature these dispatch to rayon;
//! without it they are plain loops. Every helper preserves index order in its
//! output so results do not depend on scheduling.

/// Below this many items the helpers stay sequential.
pub const MIN_PARALLEL_LEN: usize = 2048;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Configures the global thread pool. `0` keeps the implementation default.
/// Returns false if the pool was already initialized.
pub fn init_threads(threads: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        if threads == 0 {
            return true;
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        true
    }
}

/// Runs `op` with parallelism disabled (a one-thread pool), or directly when
/// the crate is built without the `parallel` feature.
pub fn sequential<R: Send>(op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map(|pool| pool.install(op))
            .expect("failed to build single-thread pool")
    }
    #[cfg(not(feature = "parallel"))]
    {
        op()
    }
}

/// `out[i] = f(i)` for every index.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= MIN_PARALLEL_LEN {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        return;
    }
    out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

/// `out[i] += f(i)` for every index.
pub fn add_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= MIN_PARALLEL_LEN {
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v += f(i));
        return;
    }
    out.iter_mut().enumerate().for_each(|(i, v)| *v += f(i));
}

/// Ordered map over `0..n`. Parallel regardless of `n`; meant for coarse
/// work items (one cube, one level, one sample row).
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
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

/// Applies `f(row_index, row)` to consecutive chunks of length `row_len`.
pub fn for_each_row<F>(data: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    if data.len() >= MIN_PARALLEL_LEN {
        data.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    data.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}
