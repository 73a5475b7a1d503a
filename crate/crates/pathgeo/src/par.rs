//! Data-parallel map with a sequential fallback.
//!
//! Pointwise work (sampling oracles, per-point rank tests, residual trials,
//! surface grids) is embarrassingly parallel. `map` preserves input order, so
//! downstream aggregation is deterministic regardless of the feature flag or
//! thread count. `map_seq` is always sequential; the bench suite compares the
//! two on the same workloads.

/// Order-preserving map over a slice, parallel when the `parallel` feature is
/// enabled.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Order-preserving map over a slice (sequential build).
#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Always-sequential map, kept for benchmarking against [`map`].
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let xs: Vec<i64> = (0..1000).collect();
        let doubled = map(&xs, |x| x * 2);
        let expected = map_seq(&xs, |x| x * 2);
        assert_eq!(doubled, expected);
    }
}
