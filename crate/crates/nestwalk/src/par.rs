//! Order-preserving map over seeds, data-parallel when the `parallel` feature is on.

use std::ops::Range;

#[cfg(feature = "parallel")]
pub fn map_seeds<T, F>(seeds: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    seeds.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_seeds<T, F>(seeds: Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_seeds_sequential(seeds, f)
}

pub fn map_seeds_sequential<T, F>(seeds: Range<u64>, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.map(f).collect()
}

/// Whether [`map_seeds`] runs on the rayon pool in this build.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
