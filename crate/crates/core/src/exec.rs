//! Execution strategy for the data-parallel loops in this crate.
//!
//! Every parallel entry point takes an [`Execution`]. With the `parallel`
//! feature disabled, [`Execution::Parallel`] silently runs sequentially, so
//! callers never need their own `cfg` gates. Results never depend on the
//! chosen strategy: work items are independent and reductions are
//! associative and commutative.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving input order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving index order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Folds every item into an accumulator and merges the partial accumulators.
///
/// `merge` must be associative and commutative with `identity()` as its unit;
/// the parallel path reduces shards in an unspecified order.
pub fn fold_reduce<T, A, Id, Fo, Me>(
    exec: Execution,
    items: &[T],
    identity: Id,
    fold: Fo,
    merge: Me,
) -> A
where
    T: Sync,
    A: Send,
    Id: Fn() -> A + Sync + Send,
    Fo: Fn(A, &T) -> A + Sync + Send,
    Me: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items
            .par_iter()
            .fold(&identity, &fold)
            .reduce(&identity, &merge);
    }
    let _ = (exec, &merge);
    items.iter().fold(identity(), fold)
}
