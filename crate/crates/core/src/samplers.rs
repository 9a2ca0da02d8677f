//! Random trees: plain Galton-Watson trees, forests, restrictions of the
//! immortal tree, and trees conditioned on a functional by rejection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{Condition, EngineOptions, ForestLaw};
use crate::offspring::OffspringDist;
use crate::par::{chunk_sizes, draw_batch, map_chunks};
use crate::rng::RngState;
use crate::tree::{Functional, PlaneTree};

/// Default cap on the number of vertices of a sampled tree.
pub const DEFAULT_NODE_CAP: usize = 10_000_000;

/// A Galton-Watson draw, or a note that it outgrew the vertex cap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GwDraw {
    Tree(PlaneTree),
    Overflow,
}

/// Samples a Galton-Watson tree by drawing out-degrees in depth-first order
/// (the Lukasiewicz walk), stopping at `node_cap` vertices.
pub fn sample_gw(p: &OffspringDist, rng: &mut RngState, node_cap: usize) -> GwDraw {
    let mut degrees = Vec::new();
    let mut open: i64 = 1;
    while open > 0 {
        if degrees.len() >= node_cap {
            return GwDraw::Overflow;
        }
        let d = p.sample(rng);
        degrees.push(d);
        open += d as i64 - 1;
    }
    GwDraw::Tree(PlaneTree::from_degrees_unchecked(degrees))
}

/// `k` independent trees, or `None` if one of them overflowed.
pub fn sample_forest(p: &OffspringDist, k: usize, rng: &mut RngState, node_cap: usize) -> Option<Vec<PlaneTree>> {
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        match sample_gw(p, rng, node_cap) {
            GwDraw::Tree(t) => out.push(t),
            GwDraw::Overflow => return None,
        }
    }
    Some(out)
}

fn normal_prefix(p: &OffspringDist, rng: &mut RngState, depth: u32, b: u32, out: &mut Vec<u32>) {
    if depth == b {
        out.push(0);
        return;
    }
    let k = p.sample(rng);
    out.push(k);
    for _ in 0..k {
        normal_prefix(p, rng, depth + 1, b, out);
    }
}

/// Spine vertex at `depth`; `continue_spine` decides whether it is size-biased.
fn spine_prefix(
    p: &OffspringDist,
    rng: &mut RngState,
    depth: u32,
    b: u32,
    continue_spine: &mut dyn FnMut(&mut RngState) -> bool,
    out: &mut Vec<u32>,
) {
    if depth == b {
        out.push(0);
        return;
    }
    if !continue_spine(rng) {
        normal_prefix(p, rng, depth, b, out);
        return;
    }
    let k = p.sample_size_biased(rng);
    let special = rng.below(k as u64) as u32;
    out.push(k);
    for i in 0..k {
        if i == special {
            spine_prefix(p, rng, depth + 1, b, continue_spine, out);
        } else {
            normal_prefix(p, rng, depth + 1, b, out);
        }
    }
}

/// `r_b` of the immortal tree: spine vertices have size-biased offspring and
/// one uniformly chosen special child; all other vertices branch normally.
pub fn sample_immortal_prefix(p: &OffspringDist, rng: &mut RngState, b: u32) -> PlaneTree {
    let mut out = Vec::new();
    spine_prefix(p, rng, 0, b, &mut |_| true, &mut out);
    PlaneTree::from_degrees_unchecked(out)
}

/// `r_b` of the tree whose spine continues at each generation with
/// probability `mean` and otherwise turns into an ordinary vertex.
pub fn sample_capped_spine_prefix(p: &OffspringDist, rng: &mut RngState, b: u32) -> PlaneTree {
    let mu = p.mean();
    let mut out = Vec::new();
    spine_prefix(p, rng, 0, b, &mut |r| r.uniform() < mu, &mut out);
    PlaneTree::from_degrees_unchecked(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RejectionOptions {
    pub node_cap: usize,
    /// Total number of trees that may be drawn.
    pub max_attempts: u64,
}

impl Default for RejectionOptions {
    fn default() -> Self {
        RejectionOptions { node_cap: DEFAULT_NODE_CAP, max_attempts: 1_000_000_000 }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionedDraw {
    pub tree: PlaneTree,
    pub attempts: u64,
    pub overflows: u64,
}

/// Exact probability of the conditioning event when it is cheap to compute.
pub fn event_probability(p: &OffspringDist, f: &Functional, cond: Condition) -> Option<f64> {
    if cond.level() > 512 || p.max_degree() > 10_000 {
        return None;
    }
    let opts = EngineOptions { convolution_budget: 200_000_000, ..EngineOptions::default() };
    let mut law = ForestLaw::new(p, f, cond.level(), opts).ok()?;
    match cond {
        Condition::Tail(n) => law.tail(1, n as i64).ok(),
        Condition::Point(n) => law.point(1, n as i64).ok(),
    }
}

fn reject_impossible(p: &OffspringDist, f: &Functional, cond: Condition) -> Result<()> {
    if let Some(q) = event_probability(p, f, cond) {
        if q <= 0.0 {
            return Err(Error::Budget(format!(
                "{} with {:?} has probability zero; no sample can be accepted",
                f.name(),
                cond
            )));
        }
    }
    Ok(())
}

/// One tree conditioned on `cond` by rejection.
pub fn sample_conditioned(
    p: &OffspringDist,
    f: &Functional,
    cond: Condition,
    rng: &mut RngState,
    opts: &RejectionOptions,
) -> Result<ConditionedDraw> {
    reject_impossible(p, f, cond)?;
    draw_conditioned(p, f, cond, rng, opts.node_cap, opts.max_attempts)
}

fn draw_conditioned(
    p: &OffspringDist,
    f: &Functional,
    cond: Condition,
    rng: &mut RngState,
    node_cap: usize,
    max_attempts: u64,
) -> Result<ConditionedDraw> {
    let mut overflows = 0;
    for attempt in 1..=max_attempts {
        match sample_gw(p, rng, node_cap) {
            GwDraw::Tree(t) => {
                if cond.holds(t.functional(f)) {
                    return Ok(ConditionedDraw { tree: t, attempts: attempt, overflows });
                }
            }
            GwDraw::Overflow => overflows += 1,
        }
    }
    Err(Error::Budget(format!("no tree with {} {:?} in {max_attempts} attempts", f.name(), cond)))
}

/// Accepted samples mapped through `map`, with acceptance bookkeeping.
#[derive(Clone, Debug)]
pub struct RejectionBatch<T> {
    pub items: Vec<T>,
    pub attempts: u64,
    pub overflows: u64,
}

impl<T> RejectionBatch<T> {
    pub fn acceptance_rate(&self) -> f64 {
        self.items.len() as f64 / self.attempts.max(1) as f64
    }
}

pub use crate::par::CHUNK as BATCH_CHUNK;

/// `count` conditioned trees, each passed through `map`. Chunk `i` uses
/// `rng.split(i)`, so the output does not depend on `workers`.
pub fn conditioned_batch<T, M>(
    p: &OffspringDist,
    f: &Functional,
    cond: Condition,
    count: u64,
    rng: &RngState,
    opts: &RejectionOptions,
    workers: usize,
    map: M,
) -> Result<RejectionBatch<T>>
where
    T: Send,
    M: Fn(PlaneTree) -> T + Sync + Send,
{
    reject_impossible(p, f, cond)?;
    let sizes = chunk_sizes(count, BATCH_CHUNK);
    let per_chunk_budget = |size: u64| ((opts.max_attempts as f64) * size as f64 / count.max(1) as f64).ceil() as u64;
    let parts = map_chunks(workers, sizes.len(), |i| -> Result<RejectionBatch<T>> {
        let mut r = rng.split(i as u64);
        let mut budget = per_chunk_budget(sizes[i]);
        let mut items = Vec::with_capacity(sizes[i] as usize);
        let mut attempts = 0;
        let mut overflows = 0;
        for _ in 0..sizes[i] {
            let d = draw_conditioned(p, f, cond, &mut r, opts.node_cap, budget)?;
            budget -= d.attempts;
            attempts += d.attempts;
            overflows += d.overflows;
            items.push(map(d.tree));
        }
        Ok(RejectionBatch { items, attempts, overflows })
    });
    let mut out = RejectionBatch { items: Vec::with_capacity(count as usize), attempts: 0, overflows: 0 };
    for part in parts {
        let part = part?;
        out.items.extend(part.items);
        out.attempts += part.attempts;
        out.overflows += part.overflows;
    }
    Ok(out)
}

/// `count` immortal prefixes of height `b`, chunked like [`conditioned_batch`].
pub fn immortal_prefix_batch(p: &OffspringDist, b: u32, count: u64, rng: &RngState, workers: usize) -> Vec<PlaneTree> {
    draw_batch(count, workers, rng, |r| sample_immortal_prefix(p, r, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_draws_repeat() {
        let p = OffspringDist::geometric(0.5, Some(60)).unwrap();
        let mut a = RngState::new(5);
        let mut b = RngState::new(5);
        for _ in 0..50 {
            assert_eq!(sample_gw(&p, &mut a, 1000), sample_gw(&p, &mut b, 1000));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let p = OffspringDist::explicit(&[0.0, 0.5, 0.5]).unwrap();
        let mut r = RngState::new(1);
        assert_eq!(sample_gw(&p, &mut r, 100), GwDraw::Overflow);
    }

    #[test]
    fn immortal_prefix_has_a_vertex_at_depth_b() {
        let p = OffspringDist::geometric(0.5, Some(60)).unwrap();
        let mut r = RngState::new(2);
        for _ in 0..200 {
            let t = sample_immortal_prefix(&p, &mut r, 3);
            assert!(t.generation_size(3) >= 1);
            assert!(t.height() == 3);
        }
    }

    #[test]
    fn degenerate_point_condition_fails_before_sampling() {
        let p = OffspringDist::binary_critical();
        let mut r = RngState::new(3);
        let opts = RejectionOptions { node_cap: 1000, max_attempts: 10 };
        let res = sample_conditioned(&p, &Functional::MaxOutDegree, Condition::Point(3), &mut r, &opts);
        assert!(matches!(res, Err(Error::Budget(_))));
        assert_eq!(r, RngState::new(3));
    }

    #[test]
    fn batch_is_independent_of_worker_count() {
        let p = OffspringDist::binary_critical();
        let rng = RngState::new(9);
        let opts = RejectionOptions { node_cap: 100_000, max_attempts: 1_000_000 };
        let a = conditioned_batch(&p, &Functional::Height, Condition::Tail(3), 5000, &rng, &opts, 1, |t| t).unwrap();
        let b = conditioned_batch(&p, &Functional::Height, Condition::Tail(3), 5000, &rng, &opts, 3, |t| t).unwrap();
        assert_eq!(a.items, b.items);
        assert_eq!(a.attempts, b.attempts);
        assert!(a.items.iter().all(|t| t.height() > 3));
    }
}
