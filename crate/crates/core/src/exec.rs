//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate is expressed as an index-wise map followed by
//! an in-order fold. The map fans out across rayon workers when the
//! `parallel` feature is enabled and degrades to a plain sequential loop
//! otherwise. Because each element is produced by the same closure and any
//! reduction happens afterwards in index order, results are bit-identical
//! across both modes and across thread counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this size the rayon dispatch is skipped; fork/join overhead
/// dominates for tiny inputs.
#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 64;

/// Sequential index-wise map. Always available; used by benches as the
/// baseline regardless of feature flags.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Parallel index-wise map over the current rayon pool.
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Index-wise map, parallel when the feature is on and the input is large
/// enough. Output order always matches index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if n < PAR_THRESHOLD {
        map_indexed_seq(n, f)
    } else {
        map_indexed_par(n, f)
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

/// Index-wise map for coarse tasks (whole model trainings, per-seed runs)
/// where each element dwarfs dispatch overhead: no size threshold.
#[cfg(feature = "parallel")]
pub fn map_indexed_coarse<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_par(n, f)
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed_coarse<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    map_indexed_seq(n, f)
}

/// Sum of `f(i)` for `i in 0..n`, accumulated in index order so the result
/// does not depend on the execution mode.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, f).iter().sum()
}

/// Splits `base` into an independent deterministic stream for `tag`.
/// FNV-1a over the seed bytes and the tag; stable across platforms.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in base.to_le_bytes().iter().chain(tag.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_seq_matches_dispatched() {
        let f = |i: usize| (i as f64).sqrt() * 1.7 - (i as f64 * 0.3).sin();
        let a = map_indexed_seq(1000, f);
        let b = map_indexed(1000, f);
        assert_eq!(a, b, "parallel and sequential maps must agree bitwise");
    }

    #[test]
    fn sum_is_order_stable() {
        let f = |i: usize| 1.0 / (i as f64 + 1.0);
        let direct: f64 = (0..500).map(f).sum();
        assert_eq!(sum_indexed(500, f), direct);
    }

    #[test]
    fn derive_seed_separates_tags() {
        let a = derive_seed(7, "alpha");
        let b = derive_seed(7, "beta");
        let c = derive_seed(8, "alpha");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "alpha"));
    }
}
