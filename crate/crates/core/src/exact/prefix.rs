//! Laws of the restriction `r_b` of a tree to its first `b` generations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::enumerate::enumerate_trees;
use super::laws::{EngineOptions, ForestLaw};
use crate::error::{invalid, Error, Result};
use crate::offspring::OffspringDist;
use crate::tree::{Functional, PlaneTree};

/// Event on a functional value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `A > n`
    Tail(u64),
    /// `A = n`
    Point(u64),
}

impl Condition {
    pub fn holds(&self, value: u64) -> bool {
        match *self {
            Condition::Tail(n) => value > n,
            Condition::Point(n) => value == n,
        }
    }

    pub fn level(&self) -> u64 {
        match *self {
            Condition::Tail(n) | Condition::Point(n) => n,
        }
    }
}

/// A probability law on trees of height at most `b`, listed on a finite
/// support. `deficiency` is the mass not listed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixLaw {
    pub height: u32,
    pub probs: BTreeMap<PlaneTree, f64>,
    pub deficiency: f64,
}

impl PrefixLaw {
    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn prob(&self, t: &PlaneTree) -> f64 {
        self.probs.get(t).copied().unwrap_or(0.0)
    }

    /// Empirical law of a sample of prefixes.
    pub fn empirical<'a, I: IntoIterator<Item = &'a PlaneTree>>(height: u32, sample: I) -> Self {
        let mut counts: BTreeMap<PlaneTree, u64> = BTreeMap::new();
        let mut n = 0u64;
        for t in sample {
            *counts.entry(t.clone()).or_insert(0) += 1;
            n += 1;
        }
        Self::from_counts(height, counts, n)
    }

    pub fn from_counts(height: u32, counts: BTreeMap<PlaneTree, u64>, n: u64) -> Self {
        let probs = counts.into_iter().map(|(t, c)| (t, c as f64 / n as f64)).collect();
        PrefixLaw { height, probs, deficiency: 0.0 }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tree", "probability"])?;
        for (t, p) in &self.probs {
            w.write_record([t.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Total variation between two listed laws on the same height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvBound {
    /// Half the l1 distance over the listed supports.
    pub listed: f64,
    /// `listed` plus half of both deficiencies; bounds the true distance.
    pub upper: f64,
}

pub fn tv_distance(a: &PrefixLaw, b: &PrefixLaw) -> Result<TvBound> {
    if a.height != b.height {
        return invalid(format!("laws live on different heights {} and {}", a.height, b.height));
    }
    let mut sum = 0.0;
    for (t, pa) in &a.probs {
        sum += (pa - b.prob(t)).abs();
    }
    for (t, pb) in &b.probs {
        if !a.probs.contains_key(t) {
            sum += pb.abs();
        }
    }
    let listed = 0.5 * sum;
    Ok(TvBound { listed, upper: listed + 0.5 * (a.deficiency + b.deficiency) })
}

/// `P[r_b(tau) = t]`: product of `p_{k_u}` over vertices of depth below `b`.
pub fn prefix_prob(p: &OffspringDist, t: &PlaneTree, b: u32) -> Result<f64> {
    let depths = t.depths();
    if depths.iter().any(|&d| d > b) {
        return invalid("tree is higher than the restriction level");
    }
    Ok(t.degrees()
        .iter()
        .zip(&depths)
        .filter(|(_, &d)| d < b)
        .map(|(&k, _)| p.p(k as usize))
        .product())
}

/// Exact probability of `r_b = t` under the size-biased tree with an infinite
/// spine: `mean^{-b} Y_b(t) P[r_b(tau) = t]`.
pub fn immortal_prefix_prob(p: &OffspringDist, t: &PlaneTree, b: u32) -> Result<f64> {
    let y = t.generation_size(b) as f64;
    Ok(y * prefix_prob(p, t, b)? / p.mean().powi(b as i32))
}

/// Exact probability of `r_b = t` when the spine stops after an independent
/// geometric number of steps (it continues at each generation with
/// probability `mean`), after which every vertex branches normally.
pub fn capped_spine_prefix_prob(p: &OffspringDist, t: &PlaneTree, b: u32) -> Result<f64> {
    let sizes = t.generation_sizes();
    let y = |h: usize| sizes.get(h).copied().unwrap_or(0) as f64;
    let mu = p.mean();
    let early: f64 = (0..b as usize).map(y).sum();
    Ok(prefix_prob(p, t, b)? * ((1.0 - mu) * early + y(b as usize)))
}

/// Enumeration limits for prefix laws.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PrefixEnumeration {
    pub node_cap: Option<usize>,
    pub max_trees: usize,
}

impl Default for PrefixEnumeration {
    fn default() -> Self {
        PrefixEnumeration { node_cap: None, max_trees: 2_000_000 }
    }
}

fn prefixes(p: &OffspringDist, b: u32, lim: &PrefixEnumeration) -> Result<Vec<PlaneTree>> {
    enumerate_trees(&p.support(), Some(b), lim.node_cap, lim.max_trees)
}

/// Law of `r_b` of the immortal tree on every enumerated prefix.
pub fn immortal_prefix_law(p: &OffspringDist, b: u32, lim: &PrefixEnumeration) -> Result<PrefixLaw> {
    if p.is_supercritical() {
        return Err(Error::Unsupported("immortal prefix law needs mean at most 1".into()));
    }
    let mut probs = BTreeMap::new();
    for t in prefixes(p, b, lim)? {
        let q = immortal_prefix_prob(p, &t, b)?;
        if q > 0.0 {
            probs.insert(t, q);
        }
    }
    let total: f64 = probs.values().sum();
    Ok(PrefixLaw { height: b, probs, deficiency: (1.0 - total).max(0.0) })
}

/// Mass of the immortal prefix law on prefixes with at most `node_cap`
/// vertices, computed by dynamic programming over generations on the joint
/// law of (generation size, vertices so far). Independent of enumeration.
pub fn immortal_mass_within_cap(p: &OffspringDist, b: u32, node_cap: usize) -> f64 {
    let cap = node_cap;
    // powers[z][y] = P[S_z = y], y <= cap
    let mut powers = vec![vec![0.0; cap + 1]; cap + 1];
    powers[0][0] = 1.0;
    for z in 1..=cap {
        for y in 0..=cap {
            let prev = powers[z - 1][y];
            if prev == 0.0 {
                continue;
            }
            for k in 0..=p.max_degree().min(cap - y) {
                powers[z][y + k] += prev * p.p(k);
            }
        }
    }
    // state[z][s]: generation size z, s vertices in generations so far.
    let mut state = vec![vec![0.0; cap + 1]; cap + 1];
    if cap >= 1 {
        state[1][1] = 1.0;
    }
    for _ in 0..b {
        let mut next = vec![vec![0.0; cap + 1]; cap + 1];
        for z in 0..=cap {
            for s in 0..=cap {
                let w = state[z][s];
                if w == 0.0 {
                    continue;
                }
                for y in 0..=cap - s {
                    let q = powers[z][y];
                    if q > 0.0 {
                        next[y][s + y] += w * q;
                    }
                }
            }
        }
        state = next;
    }
    let mut total = 0.0;
    for (z, row) in state.iter().enumerate() {
        for &w in row {
            total += z as f64 * w;
        }
    }
    total / p.mean().powi(b as i32)
}

/// How the functional of the whole tree decomposes given `r_b = t` with
/// `k > 0` vertices at depth `b`.
enum Decomposition {
    /// `A = shift + A(forest)`
    Shift(u64),
    /// `A = max(floor, A(forest))`
    Max(u64),
}

fn decomposition(f: &Functional, t: &PlaneTree, b: u32) -> Decomposition {
    let depths = t.depths();
    let below = || t.degrees().iter().zip(&depths).filter(|(_, &d)| d < b);
    match f {
        Functional::Height => Decomposition::Shift(b as u64),
        Functional::TotalProgeny => Decomposition::Shift(below().count() as u64),
        Functional::CountInSet { set } => Decomposition::Shift(below().filter(|(&k, _)| set.contains(k)).count() as u64),
        Functional::MaxOutDegree => Decomposition::Max(below().map(|(&k, _)| k as u64).max().unwrap_or(0)),
        Functional::Width => {
            let sizes = t.generation_sizes();
            Decomposition::Max(sizes.iter().take(b as usize).copied().max().unwrap_or(0))
        }
    }
}

/// `P[event | r_b(tau) = t]` for a prefix `t` of height at most `b`.
pub fn conditional_event_prob(
    law: &mut ForestLaw<'_>,
    t: &PlaneTree,
    b: u32,
    cond: Condition,
) -> Result<f64> {
    let f = law.functional().clone();
    let k = t.generation_size(b);
    if k == 0 {
        return Ok(if cond.holds(t.functional(&f)) { 1.0 } else { 0.0 });
    }
    let n = cond.level() as i64;
    match (decomposition(&f, t, b), cond) {
        (Decomposition::Shift(s), Condition::Tail(_)) => law.tail(k, n - s as i64),
        (Decomposition::Shift(s), Condition::Point(_)) => law.point(k, n - s as i64),
        (Decomposition::Max(m), Condition::Tail(_)) => {
            if m as i64 > n {
                Ok(1.0)
            } else {
                law.tail(k, n)
            }
        }
        (Decomposition::Max(m), Condition::Point(_)) => {
            if n < m as i64 {
                Ok(0.0)
            } else if n == m as i64 {
                law.cdf(k, n)
            } else {
                law.point(k, n)
            }
        }
    }
}

/// Law of `r_b` under the Galton-Watson law conditioned on `cond`.
pub fn conditioned_prefix_law(
    p: &OffspringDist,
    f: &Functional,
    cond: Condition,
    b: u32,
    lim: &PrefixEnumeration,
    opts: EngineOptions,
) -> Result<PrefixLaw> {
    let mut law = ForestLaw::new(p, f, cond.level(), opts)?;
    let event = match cond {
        Condition::Tail(n) => law.tail(1, n as i64)?,
        Condition::Point(n) => law.point(1, n as i64)?,
    };
    if event <= 0.0 {
        return Err(Error::ZeroProbability(format!("{} with {:?}", f.name(), cond)));
    }
    let mut probs = BTreeMap::new();
    for t in prefixes(p, b, lim)? {
        let q = prefix_prob(p, &t, b)?;
        if q == 0.0 {
            continue;
        }
        let c = conditional_event_prob(&mut law, &t, b, cond)?;
        if c > 0.0 {
            probs.insert(t, q * c / event);
        }
    }
    let total: f64 = probs.values().sum();
    Ok(PrefixLaw { height: b, probs, deficiency: (1.0 - total).max(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> PlaneTree {
        s.parse().unwrap()
    }

    #[test]
    fn prefix_probability_examples() {
        let p = OffspringDist::binary_critical();
        assert_eq!(prefix_prob(&p, &t("2 0 0"), 1).unwrap(), 0.5);
        assert_eq!(prefix_prob(&p, &t("0"), 3).unwrap(), 0.5);
        assert!(prefix_prob(&p, &t("2 0 0"), 0).is_err());
        assert_eq!(immortal_prefix_prob(&p, &t("2 0 0"), 1).unwrap(), 1.0);
    }

    #[test]
    fn binary_immortal_law_is_complete() {
        let p = OffspringDist::binary_critical();
        for b in 1..=4 {
            let law = immortal_prefix_law(&p, b, &PrefixEnumeration::default()).unwrap();
            assert!((law.total() - 1.0).abs() < 1e-12, "b = {b}");
            assert!(law.deficiency < 1e-12);
        }
    }

    #[test]
    fn capped_mass_matches_enumeration() {
        let p = OffspringDist::geometric(0.5, Some(60)).unwrap();
        let lim = PrefixEnumeration { node_cap: Some(9), max_trees: 1_000_000 };
        let law = immortal_prefix_law(&p, 3, &lim).unwrap();
        let dp = immortal_mass_within_cap(&p, 3, 9);
        assert!((law.total() - dp).abs() < 1e-12);
    }

    #[test]
    fn capped_spine_law_sums_to_one() {
        let p = OffspringDist::explicit(&[0.3, 0.5, 0.2]).unwrap();
        let trees = enumerate_trees(&p.support(), Some(3), None, 100_000).unwrap();
        let total: f64 = trees.iter().map(|x| capped_spine_prefix_prob(&p, x, 3).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditioned_law_sums_to_one_when_enumeration_is_complete() {
        let p = OffspringDist::binary_critical();
        for f in [Functional::Height, Functional::Width, Functional::TotalProgeny, Functional::MaxOutDegree] {
            let law = conditioned_prefix_law(&p, &f, Condition::Tail(1), 2, &PrefixEnumeration::default(), EngineOptions::default())
                .unwrap();
            assert!((law.total() - 1.0).abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn impossible_condition_is_reported() {
        let p = OffspringDist::binary_critical();
        let r = conditioned_prefix_law(
            &p,
            &Functional::MaxOutDegree,
            Condition::Tail(2),
            2,
            &PrefixEnumeration::default(),
            EngineOptions::default(),
        );
        assert!(matches!(r, Err(Error::ZeroProbability(_))));
    }

    #[test]
    fn tv_properties() {
        let p = OffspringDist::binary_critical();
        let a = immortal_prefix_law(&p, 2, &PrefixEnumeration::default()).unwrap();
        assert_eq!(tv_distance(&a, &a).unwrap().listed, 0.0);
        let b = conditioned_prefix_law(&p, &Functional::Height, Condition::Tail(3), 2, &PrefixEnumeration::default(), EngineOptions::default())
            .unwrap();
        let d1 = tv_distance(&a, &b).unwrap();
        let d2 = tv_distance(&b, &a).unwrap();
        assert_eq!(d1, d2);
        assert!(d1.listed > 0.0 && d1.listed <= 1.0);
        let c = immortal_prefix_law(&p, 3, &PrefixEnumeration::default()).unwrap();
        assert!(tv_distance(&a, &c).is_err());
    }
}
