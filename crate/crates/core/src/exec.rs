//! Order-preserving batch evaluation, parallel when the `parallel` feature is on.

use serde::{Deserialize, Serialize};

/// How a batch of independent evaluations is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Exec {
    /// Rayon's global pool (sequential without the `parallel` feature).
    #[default]
    Parallel,
    Sequential,
    /// Dedicated pool with this many threads; `0` means automatic.
    Workers(usize),
}

impl Exec {
    pub fn from_workers(n: usize) -> Self {
        match n {
            0 => Exec::Parallel,
            1 => Exec::Sequential,
            n => Exec::Workers(n),
        }
    }
}

/// Applies `f` to every item. Results come back in input order regardless of
/// scheduling.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Exec::Sequential => items.iter().map(f).collect(),
        Exec::Parallel => par_map(items, f),
        Exec::Workers(n) => with_pool(n, || par_map(items, &f)),
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(n: usize, op: impl FnOnce() -> R + Send) -> R {
    // nested batches run on the pool they were called from
    if rayon::current_thread_index().is_some() {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<R: Send>(_n: usize, op: impl FnOnce() -> R + Send) -> R {
    op()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        for exec in [Exec::Sequential, Exec::Parallel, Exec::Workers(3)] {
            let out = map(exec, &items, |x| x * x);
            assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
    }

    #[test]
    fn worker_counts() {
        assert_eq!(Exec::from_workers(0), Exec::Parallel);
        assert_eq!(Exec::from_workers(1), Exec::Sequential);
        assert_eq!(Exec::from_workers(4), Exec::Workers(4));
    }
}
