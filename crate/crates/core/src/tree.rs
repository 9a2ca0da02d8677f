//! Finite plane trees.
//!
//! A tree is stored as the sequence of out-degrees of its vertices in
//! depth-first preorder, which is also the lexicographic order of the
//! Ulam-Harris words labelling the vertices. `"2 0 1 0"` is a root with two
//! children, the second of which has one child.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PlaneTree {
    degrees: Vec<u32>,
}

/// A set of out-degrees, either finite or the complement of a finite set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeSet {
    Finite(BTreeSet<u32>),
    Cofinite(BTreeSet<u32>),
}

impl DegreeSet {
    pub fn all() -> Self {
        DegreeSet::Cofinite(BTreeSet::new())
    }

    pub fn finite<I: IntoIterator<Item = u32>>(items: I) -> Self {
        DegreeSet::Finite(items.into_iter().collect())
    }

    pub fn contains(&self, k: u32) -> bool {
        match self {
            DegreeSet::Finite(s) => s.contains(&k),
            DegreeSet::Cofinite(s) => !s.contains(&k),
        }
    }
}

/// Integer-valued tree functionals that are monotone under taking subtrees.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FunctionalRepr", into = "FunctionalRepr")]
pub enum Functional {
    Height,
    Width,
    MaxOutDegree,
    CountInSet { set: DegreeSet },
    TotalProgeny,
}

/// Flat JSON form, `{"kind":"count_in_set","set":{"finite":[0]}}`, with
/// unknown keys rejected for every kind.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionalRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    set: Option<DegreeSet>,
}

impl TryFrom<FunctionalRepr> for Functional {
    type Error = String;

    fn try_from(r: FunctionalRepr) -> std::result::Result<Self, String> {
        let f = match r.kind.as_str() {
            "height" => Functional::Height,
            "width" => Functional::Width,
            "max_out_degree" => Functional::MaxOutDegree,
            "total_progeny" => Functional::TotalProgeny,
            "count_in_set" => {
                let set = r.set.ok_or("count_in_set needs a \"set\"")?;
                return Ok(Functional::CountInSet { set });
            }
            other => return Err(format!("unknown functional {other:?}")),
        };
        if r.set.is_some() {
            return Err(format!("functional {:?} takes no set", r.kind));
        }
        Ok(f)
    }
}

impl From<Functional> for FunctionalRepr {
    fn from(f: Functional) -> Self {
        let kind = f.name().to_string();
        let set = match f {
            Functional::CountInSet { set } => Some(set),
            _ => None,
        };
        FunctionalRepr { kind, set }
    }
}

impl Functional {
    pub fn name(&self) -> &'static str {
        match self {
            Functional::Height => "height",
            Functional::Width => "width",
            Functional::MaxOutDegree => "max_out_degree",
            Functional::CountInSet { .. } => "count_in_set",
            Functional::TotalProgeny => "total_progeny",
        }
    }

    pub fn leaves() -> Self {
        Functional::CountInSet { set: DegreeSet::finite([0]) }
    }
}

impl PlaneTree {
    /// Builds a tree from a preorder degree sequence, checking that the
    /// sequence describes exactly one finite tree.
    pub fn from_degrees(degrees: Vec<u32>) -> Result<Self> {
        if degrees.is_empty() {
            return invalid("empty degree sequence");
        }
        let mut open: i64 = 1;
        for (i, &d) in degrees.iter().enumerate() {
            if open == 0 {
                return invalid(format!("degree sequence closes the tree before position {i}"));
            }
            open += d as i64 - 1;
        }
        if open != 0 {
            return invalid(format!("degree sequence leaves {open} vertices unfilled"));
        }
        Ok(PlaneTree { degrees })
    }

    pub(crate) fn from_degrees_unchecked(degrees: Vec<u32>) -> Self {
        debug_assert!(PlaneTree::from_degrees(degrees.clone()).is_ok());
        PlaneTree { degrees }
    }

    /// The one-vertex tree.
    pub fn singleton() -> Self {
        PlaneTree { degrees: vec![0] }
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Number of vertices.
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Depth of each vertex, in preorder.
    pub fn depths(&self) -> Vec<u32> {
        let mut depths = Vec::with_capacity(self.degrees.len());
        let mut pending: Vec<u32> = Vec::new();
        for &d in &self.degrees {
            depths.push(pending.len() as u32);
            if d > 0 {
                pending.push(d);
            } else {
                while let Some(top) = pending.last_mut() {
                    *top -= 1;
                    if *top == 0 {
                        pending.pop();
                    } else {
                        break;
                    }
                }
            }
        }
        depths
    }

    /// `sizes[h]` is the number of vertices at depth `h`.
    pub fn generation_sizes(&self) -> Vec<u64> {
        let mut sizes = Vec::new();
        for h in self.depths() {
            let h = h as usize;
            if sizes.len() <= h {
                sizes.resize(h + 1, 0);
            }
            sizes[h] += 1;
        }
        sizes
    }

    pub fn generation_size(&self, h: u32) -> u64 {
        self.depths().iter().filter(|&&d| d == h).count() as u64
    }

    pub fn height(&self) -> u64 {
        self.depths().into_iter().max().unwrap_or(0) as u64
    }

    pub fn width(&self) -> u64 {
        self.generation_sizes().into_iter().max().unwrap_or(0)
    }

    pub fn max_out_degree(&self) -> u64 {
        self.degrees.iter().copied().max().unwrap_or(0) as u64
    }

    pub fn count_in_set(&self, set: &DegreeSet) -> u64 {
        self.degrees.iter().filter(|&&d| set.contains(d)).count() as u64
    }

    pub fn functional(&self, f: &Functional) -> u64 {
        match f {
            Functional::Height => self.height(),
            Functional::Width => self.width(),
            Functional::MaxOutDegree => self.max_out_degree(),
            Functional::CountInSet { set } => self.count_in_set(set),
            Functional::TotalProgeny => self.len() as u64,
        }
    }

    /// The subtree of vertices at depth at most `h`.
    pub fn restrict(&self, h: u32) -> PlaneTree {
        let depths = self.depths();
        let degrees = self
            .degrees
            .iter()
            .zip(&depths)
            .filter(|(_, &d)| d <= h)
            .map(|(&k, &d)| if d == h { 0 } else { k })
            .collect();
        PlaneTree { degrees }
    }

    /// Subtrees rooted at the vertices of depth `b`, in lexicographic order of
    /// their roots.
    pub fn subtrees_above(&self, b: u32) -> Vec<PlaneTree> {
        let depths = self.depths();
        let mut out = Vec::new();
        for (i, &d) in depths.iter().enumerate() {
            if d == b {
                let end = self.subtree_end(i);
                out.push(PlaneTree { degrees: self.degrees[i..end].to_vec() });
            }
        }
        out
    }

    /// One past the last preorder index of the subtree rooted at `start`.
    fn subtree_end(&self, start: usize) -> usize {
        let mut open: i64 = 1;
        let mut j = start;
        while open > 0 {
            open += self.degrees[j] as i64 - 1;
            j += 1;
        }
        j
    }

    /// Ulam-Harris words of all vertices in preorder; the root is the empty word.
    pub fn labels(&self) -> Vec<Vec<u32>> {
        let mut out = Vec::with_capacity(self.degrees.len());
        let mut stack: Vec<(u32, u32)> = Vec::new();
        for &d in &self.degrees {
            if let Some(top) = stack.last_mut() {
                top.1 += 1;
            }
            out.push(stack.iter().map(|e| e.1).collect());
            if d > 0 {
                stack.push((d, 0));
            } else {
                while let Some(&(deg, seen)) = stack.last() {
                    if seen == deg {
                        stack.pop();
                    } else {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Builds a tree from a set of Ulam-Harris words (children numbered from 1).
    pub fn from_labels<I: IntoIterator<Item = Vec<u32>>>(words: I) -> Result<Self> {
        let set: BTreeSet<Vec<u32>> = words.into_iter().collect();
        if !set.contains(&Vec::new()) {
            return invalid("label set has no root");
        }
        for w in &set {
            if let Some((&last, parent)) = w.split_last() {
                if last == 0 {
                    return invalid(format!("label {w:?} uses child index 0"));
                }
                if !set.contains(parent) {
                    return invalid(format!("label {w:?} has no parent"));
                }
                if last > 1 {
                    let mut sib = parent.to_vec();
                    sib.push(last - 1);
                    if !set.contains(&sib) {
                        return invalid(format!("label {w:?} is missing an elder sibling"));
                    }
                }
            }
        }
        let degrees = set
            .iter()
            .map(|w| {
                let mut child = w.clone();
                child.push(1);
                let mut k = 0;
                while set.contains(&child) {
                    k += 1;
                    *child.last_mut().unwrap() += 1;
                }
                k
            })
            .collect();
        PlaneTree::from_degrees(degrees)
    }
}

/// Total functional of a forest. Additive functionals add up, the others take
/// the maximum over trees (widths add level by level). The empty forest has
/// value 0 for every functional.
pub fn forest_functional(forest: &[PlaneTree], f: &Functional) -> u64 {
    match f {
        Functional::Height | Functional::MaxOutDegree => {
            forest.iter().map(|t| t.functional(f)).max().unwrap_or(0)
        }
        Functional::CountInSet { .. } | Functional::TotalProgeny => {
            forest.iter().map(|t| t.functional(f)).sum()
        }
        Functional::Width => {
            let mut levels: Vec<u64> = Vec::new();
            for t in forest {
                for (h, y) in t.generation_sizes().into_iter().enumerate() {
                    if levels.len() <= h {
                        levels.resize(h + 1, 0);
                    }
                    levels[h] += y;
                }
            }
            levels.into_iter().max().unwrap_or(0)
        }
    }
}

/// `2^{-h}` where `h` is the largest depth at which the two restrictions agree,
/// and 0 for equal trees.
pub fn ultrametric_distance(a: &PlaneTree, b: &PlaneTree) -> f64 {
    if a == b {
        return 0.0;
    }
    let mut h = 1;
    loop {
        if a.restrict(h) != b.restrict(h) {
            return 0.5f64.powi(h as i32 - 1);
        }
        h += 1;
    }
}

impl fmt::Display for PlaneTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.degrees.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for PlaneTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let degrees = s
            .split_whitespace()
            .map(|tok| tok.parse::<u32>().map_err(|e| Error::Invalid(format!("bad degree {tok:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        PlaneTree::from_degrees(degrees)
    }
}

impl Serialize for PlaneTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlaneTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> PlaneTree {
        s.parse().unwrap()
    }

    #[test]
    fn small_tree_statistics() {
        let t0 = t("2 0 1 0");
        assert_eq!(t0.generation_sizes(), vec![1, 2, 1]);
        assert_eq!(t0.generation_size(1), 2);
        assert_eq!(t0.height(), 2);
        assert_eq!(t0.width(), 2);
        assert_eq!(t0.max_out_degree(), 2);
        assert_eq!(t0.count_in_set(&DegreeSet::finite([0])), 2);
        assert_eq!(t0.len(), 4);
    }

    #[test]
    fn singleton_statistics() {
        let s = PlaneTree::singleton();
        assert_eq!(s.height(), 0);
        assert_eq!(s.width(), 1);
        assert_eq!(s.max_out_degree(), 0);
        assert_eq!(s.functional(&Functional::TotalProgeny), 1);
        assert_eq!(s.generation_size(1), 0);
    }

    #[test]
    fn restriction_and_subtrees() {
        let t0 = t("2 0 1 0");
        assert_eq!(t0.restrict(1), t("2 0 0"));
        assert_eq!(t0.restrict(0), PlaneTree::singleton());
        assert_eq!(t0.restrict(7), t0);
        assert_eq!(t0.subtrees_above(1), vec![t("0"), t("1 0")]);
        assert!(t0.subtrees_above(3).is_empty());
    }

    #[test]
    fn rejects_malformed_sequences() {
        assert!(PlaneTree::from_degrees(vec![]).is_err());
        assert!(PlaneTree::from_degrees(vec![2, 0]).is_err());
        assert!(PlaneTree::from_degrees(vec![0, 0]).is_err());
        assert!("1 x".parse::<PlaneTree>().is_err());
    }

    #[test]
    fn labels_round_trip() {
        let t0 = t("2 0 1 0");
        let labels = t0.labels();
        assert_eq!(labels, vec![vec![], vec![1], vec![2], vec![2, 1]]);
        assert_eq!(PlaneTree::from_labels(labels).unwrap(), t0);
        assert!(PlaneTree::from_labels(vec![vec![], vec![2]]).is_err());
        assert!(PlaneTree::from_labels(vec![vec![1]]).is_err());
    }

    #[test]
    fn distance_between_trees() {
        assert_eq!(ultrametric_distance(&t("2 0 1 0"), &t("2 0 1 0")), 0.0);
        assert_eq!(ultrametric_distance(&t("2 0 1 0"), &t("2 0 0")), 0.5);
        assert_eq!(ultrametric_distance(&t("0"), &t("1 0")), 1.0);
    }

    #[test]
    fn forest_values() {
        let f = vec![t("2 0 0"), t("1 1 0")];
        assert_eq!(forest_functional(&f, &Functional::Width), 3);
        assert_eq!(forest_functional(&f, &Functional::Height), 2);
        assert_eq!(forest_functional(&f, &Functional::TotalProgeny), 6);
        assert_eq!(forest_functional(&[], &Functional::Height), 0);
    }

    #[test]
    fn functional_json_shape() {
        let f: Functional = serde_json::from_str(r#"{"kind":"count_in_set","set":{"finite":[0]}}"#).unwrap();
        assert_eq!(f, Functional::leaves());
        assert!(serde_json::from_str::<Functional>(r#"{"kind":"height","x":1}"#).is_err());
    }
}
