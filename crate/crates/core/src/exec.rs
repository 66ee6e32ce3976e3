//! Parallel/sequential execution switch.
//!
//! Every hot loop in the crate maps over an index range and collects results
//! in index order, or folds fixed-size chunks whose partials are merged
//! sequentially. Both shapes produce bit-identical results whether the
//! `parallel` feature is on or off, and regardless of thread count.

#[cfg(feature = "parallel")]
pub(crate) fn mode() -> &'static str {
    "parallel"
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn mode() -> &'static str {
    "sequential"
}

/// Maps `f` over `0..n`, preserving index order.
#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Folds `0..n` in fixed chunks: each chunk accumulates sequentially, chunk
/// partials merge in chunk order. The chunk size is part of the numeric
/// contract — do not derive it from the thread count.
pub(crate) fn chunked_fold<A, I, S, M>(n: usize, chunk: usize, init: I, step: S, mut merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    S: Fn(&mut A, usize) + Sync + Send,
    M: FnMut(A, A) -> A,
{
    assert!(chunk > 0);
    let n_chunks = n.div_ceil(chunk);
    let partials = map_indexed(n_chunks, |ci| {
        let mut acc = init();
        let lo = ci * chunk;
        let hi = (lo + chunk).min(n);
        for i in lo..hi {
            step(&mut acc, i);
        }
        acc
    });
    let mut out = init();
    for p in partials {
        out = merge(out, p);
    }
    out
}
