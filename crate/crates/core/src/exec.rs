//! Execution strategy for independent work items.
//!
//! [`Executor::Parallel`] runs items on a rayon pool bounded by `jobs`
//! when the `parallel` feature is enabled and falls back to sequential
//! execution otherwise. Output order always matches input order.

/// How independent items are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Executor {
    Sequential,
    Parallel { jobs: usize },
}

impl Executor {
    /// `jobs <= 1` is sequential; larger values request a pool of that size.
    pub fn with_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            Executor::Sequential
        } else {
            Executor::Parallel { jobs }
        }
    }

    /// Worker count actually used.
    pub fn jobs(&self) -> usize {
        match self {
            Executor::Sequential => 1,
            Executor::Parallel { jobs } if cfg!(feature = "parallel") => *jobs,
            Executor::Parallel { .. } => 1,
        }
    }

    /// `items.iter().map(f)` under this strategy.
    pub fn map<T, U, F>(&self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        match *self {
            Executor::Sequential => items.iter().map(f).collect(),
            Executor::Parallel { jobs } => parallel_map(items, f, jobs),
        }
    }
}

impl Default for Executor {
    fn default() -> Self {
        Executor::Sequential
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, U, F>(items: &[T], f: F, jobs: usize) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            items.iter().map(f).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, U, F>(items: &[T], f: F, _jobs: usize) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}
