//! Independent replicate fan-out.
//!
//! Replicate `i` of an ensemble draws from the generator seeded with
//! [`replicate_seed`]`(master, i)`, so an ensemble's results depend only on
//! the master seed and never on how replicates are scheduled. Results are
//! always returned in replicate order. With the `parallel` feature the work
//! is spread over the current rayon pool; without it replicates run in
//! sequence.

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`: two SplitMix64 rounds over the
/// master seed and the golden-ratio-spaced index.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master) ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Applies `f` to replicate indices `start..end` and collects the results in
/// index order.
pub fn map_range<T, F>(start: u64, end: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (start..end).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (start..end).map(f).collect()
    }
}

/// Fallible variant of [`map_range`]; the error of the lowest failing index
/// is returned.
pub fn try_map_range<T, E, F>(start: u64, end: u64, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    map_range(start, end, f).into_iter().collect()
}

/// Runs `work` on a dedicated pool of `threads` workers (the sequential
/// build ignores the degree).
pub fn with_parallelism<R: Send>(threads: usize, work: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        work()
    }
}
