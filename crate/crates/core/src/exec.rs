//! Data-parallel execution with a deterministic reduction contract.
//!
//! Every ensemble computation in this crate maps an index range to per-item
//! results and folds them **in index order**. The map may run on a rayon pool
//! (feature `parallel`, default) or sequentially; because each item derives
//! its randomness from its own counter-based stream and the fold order is
//! fixed, the produced floating-point values are bit-identical for any worker
//! count.

/// Ordered map over `0..n`. Parallel when the `parallel` feature is enabled.
#[cfg(feature = "parallel")]
pub fn ordered_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn ordered_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential variant, kept available for benchmarks and tests that
/// compare the two execution paths.
pub fn ordered_map_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Ordered map-reduce over blocks of indices: `0..n` is split into
/// `ceil(n / block)` consecutive blocks, each block is mapped to a partial
/// accumulator (possibly in parallel), and the partials are folded strictly
/// left to right. Block boundaries are a function of `n` and `block` only, so
/// the reduction tree is independent of the worker count.
pub fn blocked_fold<A, F, G>(n: usize, block: usize, map_block: F, mut fold: G, init: A) -> A
where
    A: Send,
    F: Fn(std::ops::Range<usize>) -> A + Sync + Send,
    G: FnMut(A, A) -> A,
{
    assert!(block > 0);
    let n_blocks = n.div_ceil(block);
    let partials = ordered_map(n_blocks, |b| {
        let lo = b * block;
        let hi = (lo + block).min(n);
        map_block(lo..hi)
    });
    let mut acc = init;
    for p in partials {
        acc = fold(acc, p);
    }
    acc
}

/// Run `f` on a dedicated pool with `workers` threads (0 = rayon default).
/// Without the `parallel` feature the closure runs on the current thread and
/// `workers` is ignored.
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send>(_workers: usize, f: impl FnOnce() -> T + Send) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_preserves_index_order() {
        let v = ordered_map(1000, |i| i * i);
        assert_eq!(v, (0..1000).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn blocked_fold_matches_sequential_sum() {
        // Kahan-free float sums only agree if the fold order is fixed.
        let exact = (0..10_000).map(|i| (i as f64).sin()).sum::<f64>();
        for block in [1, 7, 64, 10_000] {
            let s = blocked_fold(
                10_000,
                block,
                |r| r.map(|i| (i as f64).sin()).sum::<f64>(),
                |a, b| a + b,
                0.0,
            );
            // bit-identical only for block = n; order-fixed otherwise
            assert!((s - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let run = |w| {
            with_workers(w, || {
                blocked_fold(
                    4096,
                    64,
                    |r| r.map(|i| (1.0 + i as f64).ln().exp2()).sum::<f64>(),
                    |a, b| a + b,
                    0.0,
                )
            })
        };
        let w1 = run(1);
        for w in [2, 3, 8] {
            assert_eq!(w1.to_bits(), run(w).to_bits());
        }
    }
}
