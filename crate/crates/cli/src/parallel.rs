//! Deterministic fan-out over random streams.
//!
//! Work is cut into chunks whose size does not depend on the worker count;
//! chunk `k` of task `tag` always draws from stream `tag << 40 | k`, and
//! results come back in chunk order, so the fold is identical for any
//! number of workers and any completion order.

use lerw3d::RandomSource;
use rayon::prelude::*;

use crate::error::CliError;

pub fn stream_id(tag: u64, index: u64) -> u64 {
    debug_assert!(index < 1 << 40);
    tag << 40 | index
}

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(workers: usize) -> Result<Pool, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Validation(format!("--workers: {e}")))?;
        Ok(Pool { pool })
    }

    /// Runs `f(index, rng)` for `index in 0..count`, one stream per index.
    pub fn map<T, F>(&self, seed: u64, tag: u64, count: u64, f: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        F: Fn(u64, &mut RandomSource) -> Result<T, CliError> + Sync,
    {
        self.pool.install(|| {
            (0..count)
                .into_par_iter()
                .map(|i| f(i, &mut RandomSource::new(seed, stream_id(tag, i))))
                .collect()
        })
    }

    /// Splits `total` items into chunks of `chunk` and runs
    /// `f(first_index, len, rng)` on each.
    pub fn chunks<T, F>(&self, seed: u64, tag: u64, total: u64, chunk: u64, f: F) -> Result<Vec<T>, CliError>
    where
        T: Send,
        F: Fn(u64, u64, &mut RandomSource) -> Result<T, CliError> + Sync,
    {
        let n = total.div_ceil(chunk);
        self.map(seed, tag, n, |k, rng| {
            let first = k * chunk;
            f(first, chunk.min(total - first), rng)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_count_does_not_change_results() {
        let run = |w| {
            Pool::new(w)
                .unwrap()
                .chunks(7, 3, 1000, 64, |first, len, rng| Ok((first, (0..len).fold(0u64, |a, _| a.wrapping_add(rng.next_u64())))))
                .unwrap()
        };
        let one = run(1);
        assert_eq!(one.len(), 16);
        assert_eq!(one[15].0, 960);
        assert_eq!(one, run(4));
        assert_eq!(one, run(8));
    }
}
