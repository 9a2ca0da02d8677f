//! Deterministic parallel map over numbered work chunks.
//!
//! Work is always cut into the same chunks, each chunk draws from its own
//! child stream, and results come back in chunk order. The worker count only
//! changes how fast the answer arrives.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Items per work chunk in batched Monte Carlo runs.
pub const CHUNK: u64 = 4096;

/// Worker count from an explicit value, else `BL_WORKERS`, else the number of
/// available cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .filter(|&w| w > 0)
        .or_else(|| std::env::var("BL_WORKERS").ok().and_then(|v| v.trim().parse().ok()).filter(|&w: &usize| w > 0))
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f(0), ..., f(n_chunks - 1)` on `workers` threads.
pub fn map_chunks<T, F>(workers: usize, n_chunks: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n_chunks <= 1 {
        return (0..n_chunks).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n_chunks).into_par_iter().map(&f).collect()),
        Err(_) => (0..n_chunks).map(f).collect(),
    }
}

/// Splits `total` items into chunks of at most `chunk` items.
pub fn chunk_sizes(total: u64, chunk: u64) -> Vec<u64> {
    let chunk = chunk.max(1);
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 {
        let c = left.min(chunk);
        out.push(c);
        left -= c;
    }
    out
}

/// Rejection sampling of `count` accepted draws. Chunk `i` draws from
/// `rng.split(i)` with its share of `max_attempts`, so the result does not
/// depend on `workers`. Returns the accepted items and the attempt count.
pub fn rejection_batch<T, F>(count: u64, max_attempts: u64, workers: usize, rng: &RngState, draw: F) -> Result<(Vec<T>, u64)>
where
    T: Send,
    F: Fn(&mut RngState) -> Option<T> + Sync + Send,
{
    let sizes = chunk_sizes(count, CHUNK);
    let budget = |size: u64| ((max_attempts as f64) * size as f64 / count.max(1) as f64).ceil() as u64;
    let parts = map_chunks(workers, sizes.len(), |i| -> Result<(Vec<T>, u64)> {
        let mut r = rng.split(i as u64);
        let limit = budget(sizes[i]);
        let mut items = Vec::with_capacity(sizes[i] as usize);
        let mut attempts = 0;
        while (items.len() as u64) < sizes[i] {
            if attempts >= limit {
                return Err(Error::Budget(format!(
                    "{} of {} draws accepted after {limit} attempts in chunk {i}",
                    items.len(),
                    sizes[i]
                )));
            }
            attempts += 1;
            if let Some(x) = draw(&mut r) {
                items.push(x);
            }
        }
        Ok((items, attempts))
    });
    let mut out = Vec::with_capacity(count as usize);
    let mut attempts = 0;
    for part in parts {
        let (items, a) = part?;
        out.extend(items);
        attempts += a;
    }
    Ok((out, attempts))
}

/// Plain batch of `count` draws, chunked like [`rejection_batch`].
pub fn draw_batch<T, F>(count: u64, workers: usize, rng: &RngState, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngState) -> T + Sync + Send,
{
    let sizes = chunk_sizes(count, CHUNK);
    map_chunks(workers, sizes.len(), |i| {
        let mut r = rng.split(i as u64);
        (0..sizes[i]).map(|_| draw(&mut r)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_chunk_order() {
        let a = map_chunks(1, 10, |i| i * i);
        let b = map_chunks(4, 10, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(chunk_sizes(10, 4), vec![4, 4, 2]);
        assert!(chunk_sizes(0, 4).is_empty());
    }

    #[test]
    fn rejection_respects_budget_and_workers() {
        let rng = RngState::new(4);
        let keep = |r: &mut RngState| {
            let u = r.uniform();
            (u < 0.3).then_some(u)
        };
        let (a, na) = rejection_batch(10_000, 1_000_000, 1, &rng, keep).unwrap();
        let (b, nb) = rejection_batch(10_000, 1_000_000, 4, &rng, keep).unwrap();
        assert_eq!(a, b);
        assert_eq!(na, nb);
        assert!(matches!(rejection_batch(10_000, 10_000, 2, &rng, keep), Err(Error::Budget(_))));
    }
}
