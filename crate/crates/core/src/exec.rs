//! Sequential or data-parallel execution of independent work items.
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] silently runs
//! sequentially so callers never need their own `cfg` branches.

/// How independent work items (samples, parameters, seeds) are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    #[default]
    Sequential,
    Parallel,
}

impl Exec {
    /// Map `f` over `0..n`, preserving index order in the output.
    pub fn map<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => par_map(n, f),
        }
    }

    pub fn is_parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

#[cfg(feature = "parallel")]
fn par_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Cap the global worker pool. Only the first call has any effect.
#[cfg(feature = "parallel")]
pub fn set_thread_cap(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build_global();
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_cap(_threads: usize) {}
