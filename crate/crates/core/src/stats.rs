//! Small statistics toolkit: mergeable moments, proportions, KS distances and
//! a chi-square goodness-of-fit test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Running mean and variance (Welford), mergeable across shards.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.count as f64 / n;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.count == 0 {
            f64::INFINITY
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// A point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// Binomial proportion `hits / trials`.
    pub fn proportion(hits: u64, trials: u64) -> Self {
        if trials == 0 {
            return Estimate { value: f64::NAN, se: f64::INFINITY };
        }
        let q = hits as f64 / trials as f64;
        Estimate { value: q, se: (q * (1.0 - q) / trials as f64).sqrt() }
    }

    /// Ratio of two independent estimates, delta method.
    pub fn ratio(&self, other: &Estimate) -> Self {
        let value = self.value / other.value;
        let se = (self.se / other.value).hypot(self.value * other.se / (other.value * other.value));
        Estimate { value, se: se.abs() }
    }

    pub fn within(&self, target: f64, slack: f64) -> bool {
        (self.value - target).abs() <= 4.0 * self.se + slack
    }
}

/// Ratio of sample means `sum(num) / sum(den)` over paired observations,
/// with the delta-method standard error `sd(num - q den) / (sqrt(n) mean(den))`.
pub fn ratio_of_means(num: &[f64], den: &[f64]) -> Estimate {
    let n = num.len().min(den.len());
    if n == 0 {
        return Estimate { value: f64::NAN, se: f64::INFINITY };
    }
    let (sa, sb): (f64, f64) = (num[..n].iter().sum(), den[..n].iter().sum());
    let q = sa / sb;
    let resid: Moments = num.iter().zip(den).map(|(a, b)| a - q * b).collect();
    let mean_b = sb / n as f64;
    Estimate { value: q, se: (resid.variance() / n as f64).sqrt() / mean_b.abs() }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let a = sorted(a);
    let b = sorted(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d.max((i as f64 / na - j as f64 / nb).abs())
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous cdf.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let v = sorted(xs);
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic p-value of a KS statistic `d` with effective size `n`.
pub fn ks_p_value(d: f64, n: f64) -> f64 {
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Pearson chi-square test of observed counts against expected
/// probabilities. Cells with expected count below 5 are pooled.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let n: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut pool_o, mut pool_e) = (0.0, 0.0);
    for (o, p) in observed.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pool_o += *o as f64;
            pool_e += e;
        } else {
            cells.push((*o as f64, e));
        }
    }
    if pool_e > 0.0 {
        cells.push((pool_o, pool_e));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = cells.len().saturating_sub(1).max(1);
    let p = ChiSquared::new(df as f64).map(|c| 1.0 - c.cdf(stat)).unwrap_or(f64::NAN);
    (stat, df, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_ratio_is_exact_for_proportional_data() {
        let den = [1.0, 2.0, 3.0, 4.0];
        let num: Vec<f64> = den.iter().map(|d| 2.5 * d).collect();
        let e = ratio_of_means(&num, &den);
        assert!((e.value - 2.5).abs() < 1e-15);
        assert!(e.se < 1e-15);
    }

    #[test]
    fn moments_merge_like_a_single_pass() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let whole: Moments = xs.iter().copied().collect();
        let mut a: Moments = xs[..37].iter().copied().collect();
        let b: Moments = xs[37..].iter().copied().collect();
        a.merge(&b);
        assert!((a.mean - whole.mean).abs() < 1e-14);
        assert!((a.variance() - whole.variance()).abs() < 1e-13);
    }

    #[test]
    fn ks_statistics() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5]) - 0.5).abs() < 1e-15);
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&u, |x| x) <= 0.0005 + 1e-12);
        assert!(ks_p_value(0.5, 100.0) < 1e-10);
    }

    #[test]
    fn chi_square_accepts_exact_counts() {
        let (_, df, p) = chi_square_gof(&[250, 500, 250], &[0.25, 0.5, 0.25]);
        assert_eq!(df, 2);
        assert!(p > 0.99);
    }
}
