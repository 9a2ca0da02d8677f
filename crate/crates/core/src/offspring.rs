//! Offspring distributions with finite support.

use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngState;

/// Tolerance on `|mean - 1|` used to call a law critical.
pub const CRITICAL_TOL: f64 = 1e-12;
/// Default bound on the probability mass cut off by truncating a family.
pub const DEFAULT_TRUNCATION_BOUND: f64 = 1e-10;

/// JSON description of an offspring law, e.g. `{"family":"geometric","a":0.5}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffspringSpec {
    /// `pmf[k]` is the probability of `k` children.
    Explicit { pmf: Vec<f64> },
    /// `p_k = (1-a) a^k`, truncated at `cap` and renormalized.
    Geometric {
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<usize>,
    },
    /// Poisson law truncated at `cap` and renormalized.
    Poisson {
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<usize>,
    },
    /// `p_k` proportional to `k^{-gamma}` on `1..=cap`, with `p_0` chosen so the
    /// mean equals `mean`. The capped law is the family member itself.
    HeavyTail {
        gamma: f64,
        mean: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Walker alias sampler over `0..len`.
#[derive(Clone, Debug)]
pub struct AliasSampler {
    table: WeightedAliasIndex<f64>,
}

impl AliasSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let table = WeightedAliasIndex::new(weights.to_vec())
            .map_err(|e| Error::Invalid(format!("cannot build alias table: {e}")))?;
        Ok(AliasSampler { table })
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngState) -> u32 {
        self.table.sample(rng) as u32
    }
}

#[derive(Clone, Debug)]
pub struct OffspringDist {
    spec: OffspringSpec,
    pmf: Vec<f64>,
    mean: f64,
    truncation_mass: f64,
    sampler: AliasSampler,
    biased_sampler: AliasSampler,
}

impl OffspringDist {
    pub fn from_spec(spec: &OffspringSpec) -> Result<Self> {
        Self::from_spec_with_bound(spec, DEFAULT_TRUNCATION_BOUND)
    }

    pub fn from_spec_with_bound(spec: &OffspringSpec, bound: f64) -> Result<Self> {
        let (pmf, truncation_mass) = match spec {
            OffspringSpec::Explicit { pmf } => (explicit_pmf(pmf)?, 0.0),
            OffspringSpec::Geometric { a, cap } => geometric_pmf(*a, *cap)?,
            OffspringSpec::Poisson { lambda, cap } => poisson_pmf(*lambda, *cap)?,
            OffspringSpec::HeavyTail { gamma, mean, cap } => (heavy_tail_pmf(*gamma, *mean, cap.unwrap_or(1_000_000))?, 0.0),
        };
        if truncation_mass >= bound {
            return invalid(format!("truncation mass {truncation_mass:e} is not below the bound {bound:e}"));
        }
        Self::build(spec.clone(), pmf, truncation_mass)
    }

    pub fn explicit(pmf: &[f64]) -> Result<Self> {
        Self::from_spec(&OffspringSpec::Explicit { pmf: pmf.to_vec() })
    }

    pub fn geometric(a: f64, cap: Option<usize>) -> Result<Self> {
        Self::from_spec(&OffspringSpec::Geometric { a, cap })
    }

    /// Critical binary branching: no child or two children with probability 1/2.
    pub fn binary_critical() -> Self {
        Self::explicit(&[0.5, 0.0, 0.5]).expect("valid law")
    }

    fn build(spec: OffspringSpec, mut pmf: Vec<f64>, truncation_mass: f64) -> Result<Self> {
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if pmf.get(1) == Some(&1.0) {
            return invalid("the law with one child almost surely is excluded");
        }
        if mean <= 0.0 {
            return invalid("offspring mean must be positive");
        }
        let sampler = AliasSampler::new(&pmf)?;
        let biased: Vec<f64> = pmf.iter().enumerate().map(|(k, p)| k as f64 * p / mean).collect();
        let biased_sampler = AliasSampler::new(&biased)?;
        Ok(OffspringDist { spec, pmf, mean, truncation_mass, sampler, biased_sampler })
    }

    pub fn spec(&self) -> &OffspringSpec {
        &self.spec
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `P[k children]`, zero outside the support.
    pub fn p(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    /// Largest degree with positive probability.
    pub fn max_degree(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn support(&self) -> Vec<u32> {
        self.pmf.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(k, _)| k as u32).collect()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    pub fn classify(&self) -> Criticality {
        if (self.mean - 1.0).abs() <= CRITICAL_TOL {
            Criticality::Critical
        } else if self.mean < 1.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        }
    }

    pub fn is_supercritical(&self) -> bool {
        self.classify() == Criticality::Supercritical
    }

    /// Generating function `sum_k p_k s^k`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.pmf.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &p)| acc * s + k as f64 * p)
    }

    /// `1 - pgf(1 - w)`, evaluated without cancellation for small `w`.
    pub fn one_minus_pgf_of_complement(&self, w: f64) -> f64 {
        if w >= 1.0 {
            return 1.0 - self.pmf[0];
        }
        let log1m = (-w).ln_1p();
        self.pmf
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &p)| if p == 0.0 { 0.0 } else { -p * (k as f64 * log1m).exp_m1() })
            .sum()
    }

    /// Size-biased law `k p_k / mean`.
    pub fn size_biased(&self) -> Vec<f64> {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p / self.mean).collect()
    }

    #[inline]
    pub fn sample(&self, rng: &mut RngState) -> u32 {
        self.sampler.sample(rng)
    }

    #[inline]
    pub fn sample_size_biased(&self, rng: &mut RngState) -> u32 {
        self.biased_sampler.sample(rng)
    }

    /// Short human-readable label, used in reports.
    pub fn label(&self) -> String {
        match &self.spec {
            OffspringSpec::Explicit { pmf } => format!("explicit{pmf:?}"),
            OffspringSpec::Geometric { a, .. } => format!("geometric(a={a},cap={})", self.max_degree()),
            OffspringSpec::Poisson { lambda, .. } => format!("poisson(lambda={lambda},cap={})", self.max_degree()),
            OffspringSpec::HeavyTail { gamma, mean, .. } => {
                format!("heavy_tail(gamma={gamma},mean={mean},cap={})", self.max_degree())
            }
        }
    }
}

fn explicit_pmf(pmf: &[f64]) -> Result<Vec<f64>> {
    if pmf.is_empty() {
        return invalid("empty pmf");
    }
    if pmf.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return invalid("pmf entries must be finite and nonnegative");
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return invalid(format!("pmf sums to {total}, not 1"));
    }
    Ok(pmf.iter().map(|p| p / total).collect())
}

/// Smallest cap whose discarded first moment is negligible, so that a critical
/// family stays critical after renormalization.
fn default_cap(tail_weight: impl Fn(usize) -> f64) -> usize {
    let mut k = 1;
    while tail_weight(k) > 1e-15 {
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    k
}

fn geometric_pmf(a: f64, cap: Option<usize>) -> Result<(Vec<f64>, f64)> {
    if !(a > 0.0 && a < 1.0) {
        return invalid("geometric parameter must lie in (0, 1)");
    }
    // Sum over k > K of (k + 1) p_k for p_k = (1 - a) a^k.
    let cap = cap.unwrap_or_else(|| default_cap(|k| a.powi(k as i32 + 1) * (k as f64 + 2.0 + a / (1.0 - a))));
    let raw: Vec<f64> = (0..=cap).map(|k| (1.0 - a) * a.powi(k as i32)).collect();
    let kept: f64 = raw.iter().sum();
    let truncation = a.powi(cap as i32 + 1);
    Ok((raw.iter().map(|p| p / kept).collect(), truncation))
}

fn poisson_pmf(lambda: f64, cap: Option<usize>) -> Result<(Vec<f64>, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return invalid("Poisson mean must be positive");
    }
    let term = |k: usize| -> f64 {
        let lg = statrs::function::gamma::ln_gamma(k as f64 + 1.0);
        (-lambda + k as f64 * lambda.ln() - lg).exp()
    };
    let cap = cap.unwrap_or_else(|| {
        default_cap(|k| (k + 1..k + 400).map(|j| (j as f64 + 1.0) * term(j)).sum())
            .max(lambda.ceil() as usize)
    });
    let raw: Vec<f64> = (0..=cap).map(term).collect();
    let kept: f64 = raw.iter().sum();
    Ok((raw.iter().map(|p| p / kept).collect(), (1.0 - kept).max(0.0)))
}

fn heavy_tail_pmf(gamma: f64, mean: f64, cap: usize) -> Result<Vec<f64>> {
    if !(gamma > 2.0) {
        return invalid("heavy-tail exponent must exceed 2");
    }
    if !(mean > 0.0 && mean <= 1.0) {
        return invalid("heavy-tail target mean must lie in (0, 1]");
    }
    if cap < 2 {
        return invalid("heavy-tail cap must be at least 2");
    }
    let s0: f64 = (1..=cap).map(|k| (k as f64).powf(-gamma)).sum();
    let s1: f64 = (1..=cap).map(|k| (k as f64).powf(1.0 - gamma)).sum();
    let c = mean / s1;
    let p0 = 1.0 - c * s0;
    if p0 < 0.0 {
        return invalid("target mean too large for this exponent");
    }
    let mut pmf = Vec::with_capacity(cap + 1);
    pmf.push(p0);
    pmf.extend((1..=cap).map(|k| c * (k as f64).powf(-gamma)));
    Ok(pmf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_law_is_critical() {
        let p = OffspringDist::binary_critical();
        assert_eq!(p.classify(), Criticality::Critical);
        assert_eq!(p.size_biased(), vec![0.0, 0.0, 1.0]);
        assert_eq!(p.support(), vec![0, 2]);
        assert!((p.pgf(0.3) - (0.5 + 0.5 * 0.09)).abs() < 1e-15);
        assert!((p.pgf_derivative(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn explicit_classification() {
        let p = OffspringDist::explicit(&[0.6, 0.2, 0.2]).unwrap();
        assert_eq!(p.classify(), Criticality::Subcritical);
        assert!((p.mean() - 0.6).abs() < 1e-15);
        let q = OffspringDist::explicit(&[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(q.classify(), Criticality::Supercritical);
    }

    #[test]
    fn excluded_laws() {
        assert!(OffspringDist::explicit(&[0.0, 1.0]).is_err());
        assert!(OffspringDist::explicit(&[1.0]).is_err());
        assert!(OffspringDist::explicit(&[0.5, 0.6]).is_err());
        assert!(OffspringDist::explicit(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn truncated_geometric_stays_critical() {
        let p = OffspringDist::geometric(0.5, None).unwrap();
        assert_eq!(p.classify(), Criticality::Critical);
        assert!(p.truncation_mass() < DEFAULT_TRUNCATION_BOUND);
        let q = OffspringDist::geometric(0.5, Some(60)).unwrap();
        assert!((q.mean() - 1.0).abs() < 1e-12);
        assert!((q.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(OffspringDist::geometric(0.5, Some(10)).is_err());
    }

    #[test]
    fn poisson_family() {
        let p = OffspringDist::from_spec(&OffspringSpec::Poisson { lambda: 1.0, cap: None }).unwrap();
        assert_eq!(p.classify(), Criticality::Critical);
        assert!(p.truncation_mass() < DEFAULT_TRUNCATION_BOUND);
    }

    #[test]
    fn heavy_tail_hits_target_mean() {
        let spec = OffspringSpec::HeavyTail { gamma: 2.5, mean: 0.8, cap: Some(10_000) };
        let p = OffspringDist::from_spec(&spec).unwrap();
        assert!((p.mean() - 0.8).abs() < 1e-12);
        assert_eq!(p.classify(), Criticality::Subcritical);
        assert!(p.p(0) > 0.5);
    }

    #[test]
    fn stable_complement_matches_direct_formula() {
        let p = OffspringDist::geometric(0.5, Some(60)).unwrap();
        for w in [1.0, 0.5, 0.1, 1e-3] {
            let direct = 1.0 - p.pgf(1.0 - w);
            assert!((p.one_minus_pgf_of_complement(w) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn spec_json_shapes() {
        let s: OffspringSpec = serde_json::from_str(r#"{"family":"geometric","a":0.5}"#).unwrap();
        assert_eq!(s, OffspringSpec::Geometric { a: 0.5, cap: None });
        let e: OffspringSpec = serde_json::from_str(r#"{"family":"explicit","pmf":[0.5,0,0.5]}"#).unwrap();
        assert_eq!(e, OffspringSpec::Explicit { pmf: vec![0.5, 0.0, 0.5] });
        assert!(serde_json::from_str::<OffspringSpec>(r#"{"family":"geometric","a":0.5,"b":1}"#).is_err());
    }

    #[test]
    fn sampler_frequencies() {
        let p = OffspringDist::explicit(&[0.25, 0.5, 0.25]).unwrap();
        let mut rng = RngState::new(11);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[p.sample(&mut rng) as usize] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            let f = c as f64 / n as f64;
            let se = (p.p(k) * (1.0 - p.p(k)) / n as f64).sqrt();
            assert!((f - p.p(k)).abs() < 5.0 * se, "k={k} f={f}");
        }
    }
}
