//! Batch-level parallelism helpers.
//!
//! Every data-parallel inner loop in the crate (per-sample forward/backward
//! passes, dataset synthesis, oracle sweeps) funnels through [`map_collect`].
//! Outputs are collected in input order, so results are identical whether the
//! `parallel` feature is on or off; reductions over the collected values are
//! always performed sequentially by the caller, which keeps floating-point
//! summation order fixed and runs bit-reproducible.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential map, kept available under all feature combinations so the
/// benches can compare both paths in one build.
pub fn map_collect_seq<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Parallel map preserving input order.
#[cfg(feature = "parallel")]
pub fn map_collect_par<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map over a slice, in parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn map_collect<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    map_collect_par(items, f)
}

/// Map over a slice, in parallel when the `parallel` feature is enabled.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T: Sync, R: Send, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R + Sync + Send,
{
    map_collect_seq(items, f)
}

/// Index-driven variant for loops that only need the counter.
pub fn map_indices<R: Send, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R + Sync + Send,
{
    let idx: Vec<usize> = (0..n).collect();
    map_collect(&idx, |&i| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let out = map_collect(&xs, |&x| x * 2);
        assert_eq!(out, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_and_seq_agree() {
        let xs: Vec<f64> = (0..257).map(|i| i as f64 * 0.1).collect();
        let a = map_collect_seq(&xs, |&x| x.sin());
        let b = map_collect_par(&xs, |&x| x.sin());
        assert_eq!(a, b);
    }
}
