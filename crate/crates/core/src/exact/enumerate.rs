//! Exhaustive enumeration of small plane trees, and the brute-force tables
//! built from it that serve as an independent check of the exact engine.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{invalid, Error, Result};
use crate::offspring::OffspringDist;
use crate::tree::{forest_functional, Functional, PlaneTree};

/// Enumerates every plane tree whose internal vertices have out-degrees in
/// `degrees`, of height at most `height` (vertices at depth `height` are
/// leaves whatever `degrees` says) and with at most `node_cap` vertices.
/// At least one of the two bounds must be given. The result is sorted.
pub fn enumerate_trees(
    degrees: &[u32],
    height: Option<u32>,
    node_cap: Option<usize>,
    max_trees: usize,
) -> Result<Vec<PlaneTree>> {
    let mut degs: Vec<u32> = degrees.to_vec();
    degs.sort_unstable();
    degs.dedup();
    let cap = match (height, node_cap) {
        (None, None) => return invalid("enumeration needs a height bound or a node cap"),
        (_, Some(c)) => c,
        (Some(h), None) => {
            let dmax = *degs.last().unwrap_or(&0) as usize;
            let mut total: usize = 0;
            let mut level: usize = 1;
            for _ in 0..=h {
                total = total.saturating_add(level);
                level = level.saturating_mul(dmax.max(1));
            }
            total
        }
    };
    if cap == 0 {
        return Ok(Vec::new());
    }
    let mut gen = Generator {
        degrees: degs,
        leaf_at_bound: height.is_some(),
        max_trees,
        memo: HashMap::new(),
    };
    let h = height.unwrap_or((cap - 1) as u32);
    let list = gen.trees(h, cap)?;
    let mut out: Vec<PlaneTree> = list.iter().map(|d| PlaneTree::from_degrees_unchecked(d.clone())).collect();
    out.sort();
    Ok(out)
}

struct Generator {
    degrees: Vec<u32>,
    leaf_at_bound: bool,
    max_trees: usize,
    memo: HashMap<(u32, usize), Rc<Vec<Vec<u32>>>>,
}

impl Generator {
    /// Trees of height at most `h` with at most `cap` vertices, sorted by size.
    fn trees(&mut self, h: u32, cap: usize) -> Result<Rc<Vec<Vec<u32>>>> {
        if let Some(v) = self.memo.get(&(h, cap)) {
            return Ok(v.clone());
        }
        let mut out: Vec<Vec<u32>> = Vec::new();
        if cap > 0 {
            if h == 0 {
                if self.leaf_at_bound || self.degrees.contains(&0) {
                    out.push(vec![0]);
                }
            } else {
                for d in self.degrees.clone() {
                    if d == 0 {
                        out.push(vec![0]);
                        continue;
                    }
                    let d = d as usize;
                    if d + 1 > cap {
                        continue;
                    }
                    let kids = self.trees(h - 1, cap - d)?;
                    let mut cur = vec![d as u32];
                    self.product(&kids, d, cap - 1, &mut cur, &mut out)?;
                }
            }
        }
        out.sort_by_key(|t| t.len());
        let rc = Rc::new(out);
        self.memo.insert((h, cap), rc.clone());
        Ok(rc)
    }

    fn product(
        &self,
        kids: &[Vec<u32>],
        remaining: usize,
        budget: usize,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) -> Result<()> {
        if remaining == 0 {
            if out.len() >= self.max_trees {
                return Err(Error::Budget(format!("more than {} trees to enumerate", self.max_trees)));
            }
            out.push(cur.clone());
            return Ok(());
        }
        for kid in kids {
            if kid.len() + remaining - 1 > budget {
                break;
            }
            let mark = cur.len();
            cur.extend_from_slice(kid);
            self.product(kids, remaining - 1, budget - kid.len(), cur, out)?;
            cur.truncate(mark);
        }
        Ok(())
    }
}

/// Probability of a complete finite tree under the Galton-Watson law.
pub fn tree_probability(p: &OffspringDist, t: &PlaneTree) -> f64 {
    t.degrees().iter().map(|&k| p.p(k as usize)).product()
}

/// Partial sums over all forests of `k` trees with at most `node_cap`
/// vertices in total. `point[n]` and `tail[n]` are the enumerated parts of
/// `P[A = n]` and `P[A > n]`; the missing mass is at most `residual`.
#[derive(Clone, Debug)]
pub struct BruteForceTable {
    pub k: u32,
    pub point: Vec<f64>,
    pub tail: Vec<f64>,
    pub residual: f64,
    /// `complete[n]` is true when every forest with `A = n` was enumerated,
    /// so `point[n]` is exact rather than a lower bound.
    pub complete: Vec<bool>,
}

/// Brute-force tables for forests of `k` in `ks` trees (k = 1 or 2 is the
/// practical range).
pub fn brute_force_tables(
    p: &OffspringDist,
    f: &Functional,
    node_cap: usize,
    n_max: u64,
    ks: &[u32],
) -> Result<Vec<BruteForceTable>> {
    let support = p.support();
    let trees = enumerate_trees(&support, None, Some(node_cap), 5_000_000)?;
    let weights: Vec<f64> = trees.iter().map(|t| tree_probability(p, t)).collect();
    let mut by_size: Vec<Vec<usize>> = vec![Vec::new(); node_cap + 1];
    for (i, t) in trees.iter().enumerate() {
        by_size[t.len()].push(i);
    }
    let len = n_max as usize + 1;
    let mut tables = Vec::new();
    for &k in ks {
        if k == 0 || k > 3 {
            return invalid("brute-force forests are limited to 1..=3 trees");
        }
        let mut point = vec![0.0; len];
        let mut tail = vec![0.0; len];
        let mut total = 0.0;
        // Smallest forest value seen among forests that were cut off by the
        // node cap is unknown, so completeness is decided per functional.
        let mut add = |forest: &[PlaneTree], w: f64| {
            let a = forest_functional(forest, f) as usize;
            total += w;
            if a < len {
                point[a] += w;
            }
            for t in tail.iter_mut().take(a.min(len)) {
                *t += w;
            }
        };
        let mut stack: Vec<usize> = Vec::new();
        enumerate_forests(&trees, &weights, &by_size, k as usize, node_cap, &mut stack, &mut add);
        let residual = (1.0 - total).max(0.0);
        let complete = (0..len).map(|n| value_is_complete(p, f, k, n as u64, node_cap)).collect();
        tables.push(BruteForceTable { k, point, tail, residual, complete });
    }
    Ok(tables)
}

fn enumerate_forests(
    trees: &[PlaneTree],
    weights: &[f64],
    by_size: &[Vec<usize>],
    k: usize,
    budget: usize,
    stack: &mut Vec<usize>,
    add: &mut impl FnMut(&[PlaneTree], f64),
) {
    if stack.len() == k {
        let forest: Vec<PlaneTree> = stack.iter().map(|&i| trees[i].clone()).collect();
        let w: f64 = stack.iter().map(|&i| weights[i]).product();
        add(&forest, w);
        return;
    }
    let others = k - stack.len() - 1;
    for size in 1..=budget.saturating_sub(others) {
        for &i in &by_size[size] {
            stack.push(i);
            enumerate_forests(trees, weights, by_size, k, budget - size, stack, add);
            stack.pop();
        }
    }
}

/// Whether every forest with functional value `n` has at most `node_cap`
/// vertices, which makes the enumerated point mass exact.
fn value_is_complete(p: &OffspringDist, f: &Functional, k: u32, n: u64, node_cap: usize) -> bool {
    match f {
        Functional::TotalProgeny => n as usize <= node_cap,
        // A forest of height n with bounded degrees has a bounded number of
        // vertices; otherwise (or for the other functionals) no finite cap
        // suffices in general.
        Functional::Height => {
            let d = p.max_degree() as u128;
            let mut total: u128 = 0;
            let mut level: u128 = k as u128;
            for _ in 0..=n {
                total += level;
                level *= d.max(1);
                if total > node_cap as u128 {
                    return false;
                }
            }
            total <= node_cap as u128
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_enumerations() {
        assert_eq!(enumerate_trees(&[0, 2], None, Some(3), 100).unwrap().len(), 2);
        assert_eq!(enumerate_trees(&[0, 1, 2], Some(1), None, 100).unwrap().len(), 3);
        assert_eq!(enumerate_trees(&[0, 1], Some(2), None, 100).unwrap().len(), 3);
        assert_eq!(enumerate_trees(&[0, 2], Some(4), None, 10_000).unwrap().len(), 677);
        assert!(enumerate_trees(&[0, 1], None, None, 10).is_err());
    }

    #[test]
    fn plane_trees_counted_by_catalan_numbers() {
        let all: Vec<u32> = (0..12).collect();
        let trees = enumerate_trees(&all, None, Some(8), 100_000).unwrap();
        let catalan = [1usize, 1, 2, 5, 14, 42, 132, 429];
        for (n, &c) in catalan.iter().enumerate() {
            assert_eq!(trees.iter().filter(|t| t.len() == n + 1).count(), c);
        }
        let mut sorted = trees.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), trees.len());
    }

    #[test]
    fn budget_is_enforced() {
        let all: Vec<u32> = (0..12).collect();
        assert!(matches!(enumerate_trees(&all, None, Some(12), 1000), Err(Error::Budget(_))));
    }

    #[test]
    fn brute_force_binary_progeny() {
        let p = OffspringDist::binary_critical();
        let t = &brute_force_tables(&p, &Functional::TotalProgeny, 11, 8, &[1]).unwrap()[0];
        assert_eq!(t.point[1], 0.5);
        assert_eq!(t.point[3], 0.125);
        assert_eq!(t.point[2], 0.0);
        assert!(t.complete[8]);
    }
}
