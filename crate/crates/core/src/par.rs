//! Order-preserving map helpers used by every batch-level loop.
//!
//! With the `parallel` feature (the default) `ordered_map` fans work out to
//! the rayon pool and collects results in input order, so batched gradient
//! sums, corpus translation and scoring all produce bit-identical results to
//! a sequential run. The `_seq` variants are always compiled in; the bench
//! suite uses them as the comparison baseline.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, preserving input order in the output.
pub fn ordered_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Sequential twin of [`ordered_map`].
pub fn ordered_map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Maps `f` over `0..n`, preserving index order in the output.
pub fn ordered_map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Sequential twin of [`ordered_map_indexed`].
pub fn ordered_map_indexed_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let items: Vec<u64> = (0..257).collect();
        let f = |x: &u64| x.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17);
        assert_eq!(ordered_map(&items, f), ordered_map_seq(&items, f));
    }

    #[test]
    fn indexed_variants_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(ordered_map_indexed(100, f), ordered_map_indexed_seq(100, f));
    }
}
