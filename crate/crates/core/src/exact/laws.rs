//! Exact tail and point probabilities of tree functionals, for a single
//! Galton-Watson tree and for forests of `k` independent trees.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::offspring::OffspringDist;
use crate::tree::{DegreeSet, Functional};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    /// Absolute tolerance for fixed-point iterations.
    pub tol: f64,
    /// Iteration cap for fixed-point iterations.
    pub max_iter: u64,
    /// Cap on the number of multiply-adds spent on convolutions.
    pub convolution_budget: u64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { tol: 1e-14, max_iter: 10_000_000, convolution_budget: 4_000_000_000 }
    }
}

/// Least fixed point in `[0, 1]` of an increasing convex map `g` (given with
/// its derivative), reached monotonically from 0. Newton steps from below
/// never overshoot the least root of `g(s) - s`; a plain step `s <- g(s)` is
/// used whenever the derivative is not below 1.
pub fn least_fixed_point(g: impl Fn(f64) -> (f64, f64), opts: &EngineOptions) -> Result<f64> {
    let mut s = 0.0f64;
    for _ in 0..opts.max_iter {
        let (gs, dg) = g(s);
        let next = if dg < 1.0 { s + (gs - s) / (1.0 - dg) } else { gs };
        let next = next.clamp(s, 1.0);
        if (next - s).abs() < opts.tol {
            return Ok(next);
        }
        s = next;
    }
    Err(Error::NoConvergence(format!("fixed point not reached in {} iterations", opts.max_iter)))
}

/// `P[H > n]` for `n = 0..=n_max`.
pub fn height_tail(p: &OffspringDist, n_max: u64) -> Vec<f64> {
    // at_least[m] = P[H >= m]; P[H >= m + 1] = 1 - pgf(1 - P[H >= m]).
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut w = 1.0;
    for _ in 0..=n_max {
        w = p.one_minus_pgf_of_complement(w);
        out.push(w);
    }
    out
}

/// `P[M <= n]` for `n = 0..=n_max`, where `M` is the largest out-degree.
pub fn max_degree_cdf(p: &OffspringDist, n_max: u64, opts: &EngineOptions) -> Result<Vec<f64>> {
    let kmax = p.max_degree() as u64;
    let extinction = if p.is_supercritical() { None } else { Some(1.0) };
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut prev: Option<f64> = None;
    for n in 0..=n_max {
        let value = if n >= kmax && extinction.is_some() {
            1.0
        } else if n > 0 && n <= kmax && p.p(n as usize) == 0.0 && prev.is_some() {
            // Same truncated generating function as for n - 1.
            prev.unwrap()
        } else {
            let m = n.min(kmax) as usize;
            let pmf = &p.pmf()[..=m];
            least_fixed_point(
                |s| {
                    let g = pmf.iter().rev().fold(0.0, |acc, &q| acc * s + q);
                    let dg = pmf.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &q)| acc * s + k as f64 * q);
                    (g, dg)
                },
                opts,
            )?
        };
        out.push(value);
        prev = Some(value);
    }
    Ok(out)
}

fn check_budget(ops: f64, opts: &EngineOptions, what: &str) -> Result<()> {
    if ops > opts.convolution_budget as f64 {
        return Err(Error::Budget(format!(
            "{what} needs about {ops:.3e} operations, above the budget of {}",
            opts.convolution_budget
        )));
    }
    Ok(())
}

/// `walk[n][m] = P[S_n = m]` for `n, m <= n_max`, where `S_n` is a sum of `n`
/// independent offspring counts.
pub fn offspring_walk(p: &OffspringDist, n_max: u64, opts: &EngineOptions) -> Result<Vec<Vec<f64>>> {
    let len = n_max as usize + 1;
    let kp = p.max_degree().min(n_max as usize);
    check_budget(len as f64 * len as f64 * (kp + 1) as f64, opts, "offspring walk convolution")?;
    let mut rows = Vec::with_capacity(len);
    let mut cur = vec![0.0; len];
    cur[0] = 1.0;
    rows.push(cur.clone());
    for _ in 1..len {
        let mut next = vec![0.0; len];
        for (m, &c) in cur.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for k in 0..=kp.min(len - 1 - m) {
                next[m + k] += c * p.p(k);
            }
        }
        rows.push(next.clone());
        cur = next;
    }
    Ok(rows)
}

/// Total progeny of a `k`-tree forest from the hitting-time identity
/// `P[L = n] = (k/n) P[S_n = n - k]`, for `n = 0..=n_max`.
pub fn progeny_pmf_from_walk(walk: &[Vec<f64>], k: u64) -> Vec<f64> {
    let len = walk.len();
    (0..len)
        .map(|n| {
            if n == 0 {
                if k == 0 { 1.0 } else { 0.0 }
            } else if (n as u64) < k {
                0.0
            } else {
                k as f64 / n as f64 * walk[n][n - k as usize]
            }
        })
        .collect()
}

pub fn progeny_pmf(p: &OffspringDist, k: u64, n_max: u64, opts: &EngineOptions) -> Result<Vec<f64>> {
    Ok(progeny_pmf_from_walk(&offspring_walk(p, n_max, opts)?, k))
}

/// Coefficients `0..=n_max` of the generating function of the number of
/// vertices with out-degree in `set`, and of its powers `1..=max_power`.
///
/// The series solves `phi = sum_k p_k x^{1[k in set]} phi^k`. Its constant
/// term is a least fixed point; every further coefficient enters the equation
/// linearly once the lower ones are known, which gives a triangular solve.
pub fn count_in_set_series(
    p: &OffspringDist,
    set: &DegreeSet,
    n_max: u64,
    max_power: usize,
    opts: &EngineOptions,
) -> Result<Vec<Vec<f64>>> {
    let len = n_max as usize + 1;
    let kmax = p.max_degree();
    let npow = kmax.max(max_power);
    check_budget(len as f64 * len as f64 * (npow + 1) as f64, opts, "count-in-set series")?;
    let inside: Vec<bool> = (0..=kmax).map(|k| set.contains(k as u32)).collect();
    let outside_pmf: Vec<f64> = (0..=kmax).map(|k| if inside[k] { 0.0 } else { p.p(k) }).collect();
    let c0 = least_fixed_point(
        |s| {
            let g = outside_pmf.iter().rev().fold(0.0, |acc, &q| acc * s + q);
            let dg = outside_pmf.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &q)| acc * s + k as f64 * q);
            (g, dg)
        },
        opts,
    )?;
    // pows[k][j] = [x^j] phi^k
    let mut pows = vec![vec![0.0; len]; npow + 1];
    pows[0][0] = 1.0;
    for k in 1..=npow {
        pows[k][0] = pows[k - 1][0] * c0;
    }
    let denom = 1.0
        - (1..=kmax)
            .filter(|&k| !inside[k])
            .map(|k| p.p(k) * k as f64 * c0.powi(k as i32 - 1))
            .sum::<f64>();
    if len > 1 && !(denom > 0.0) {
        return Err(Error::NoConvergence("count-in-set series is degenerate (tangent fixed point)".into()));
    }
    let mut a = vec![0.0; npow + 1];
    let mut b = vec![0.0; npow + 1];
    for j in 1..len {
        // pows[k][j] = a[k] + b[k] * phi_j, with phi_j = pows[1][j] unknown.
        a[0] = 0.0;
        b[0] = 0.0;
        for k in 1..=npow {
            let prev = &pows[k - 1];
            let mut cross = 0.0;
            for i in 1..j {
                cross += pows[1][i] * prev[j - i];
            }
            a[k] = c0 * a[k - 1] + cross;
            b[k] = c0 * b[k - 1] + prev[0];
        }
        let mut rhs = 0.0;
        for k in 0..=kmax {
            let pk = p.p(k);
            if pk == 0.0 {
                continue;
            }
            if inside[k] {
                rhs += pk * pows[k][j - 1];
            } else {
                rhs += pk * a[k];
            }
        }
        let phi_j = rhs / denom;
        for k in 1..=npow {
            pows[k][j] = a[k] + b[k] * phi_j;
        }
    }
    Ok(pows)
}

/// `P[W <= n]` of the width for forests of `i = 0..=n` trees, as the least
/// solution of `f(i) = sum_{j <= n} P[S_i = j] f(j)`, `f(0) = 1`, computed by
/// monotone Gauss-Seidel sweeps from below.
pub fn width_cdf_vector(p: &OffspringDist, n: u64, opts: &EngineOptions) -> Result<Vec<f64>> {
    let len = n as usize + 1;
    let walk = offspring_walk(p, n, opts)?;
    check_budget(len as f64 * len as f64, opts, "width iteration")?;
    let mut f = vec![0.0; len];
    f[0] = 1.0;
    for _ in 0..opts.max_iter {
        let mut change = 0.0f64;
        for i in 1..len {
            let row = &walk[i];
            let v: f64 = row.iter().zip(&f).map(|(t, x)| t * x).sum();
            change = change.max((v - f[i]).abs());
            f[i] = v;
        }
        if change < opts.tol {
            return Ok(f);
        }
    }
    Err(Error::NoConvergence(format!("width iteration at n = {n} did not settle")))
}

/// `P[W(forest of k trees) <= n]`; zero when `k > n`.
pub fn width_cdf(p: &OffspringDist, k: u64, n: u64, opts: &EngineOptions) -> Result<f64> {
    if k > n {
        return Ok(0.0);
    }
    Ok(width_cdf_vector(p, n, opts)?[k as usize])
}

enum LawData {
    Height { tail: Vec<f64> },
    MaxDegree { cdf: Vec<f64> },
    Width { cdfs: HashMap<u64, Vec<f64>> },
    Progeny { walk: Vec<Vec<f64>>, cdfs: HashMap<u64, Vec<f64>> },
    Count { set: DegreeSet, pows: Vec<Vec<f64>>, cdfs: HashMap<u64, Vec<f64>> },
}

/// Exact law of a functional for forests of any size, up to `n_max`.
///
/// `tail(k, n) = P[A(forest of k trees) > n]` and `point(k, n) = P[A = n]`,
/// with the conventions `tail(k, -1) = 1`, `point(k, -1) = 0` and value 0 for
/// the empty forest.
pub struct ForestLaw<'a> {
    p: &'a OffspringDist,
    functional: Functional,
    n_max: u64,
    opts: EngineOptions,
    data: LawData,
}

impl<'a> ForestLaw<'a> {
    pub fn new(p: &'a OffspringDist, functional: &Functional, n_max: u64, opts: EngineOptions) -> Result<Self> {
        if p.is_supercritical() {
            return Err(Error::Unsupported("exact laws are implemented for critical and subcritical laws".into()));
        }
        let data = match functional {
            Functional::Height => LawData::Height { tail: height_tail(p, n_max) },
            Functional::MaxOutDegree => LawData::MaxDegree { cdf: max_degree_cdf(p, n_max, &opts)? },
            Functional::Width => {
                check_budget(
                    (n_max as f64 + 1.0).powi(2) * (p.max_degree().min(n_max as usize) as f64 + 1.0),
                    &opts,
                    "width law",
                )?;
                LawData::Width { cdfs: HashMap::new() }
            }
            Functional::TotalProgeny => {
                LawData::Progeny { walk: offspring_walk(p, n_max, &opts)?, cdfs: HashMap::new() }
            }
            Functional::CountInSet { set } => {
                if (0..=p.max_degree()).all(|k| !set.contains(k as u32) || p.p(k) == 0.0) {
                    return Err(Error::ZeroProbability("the degree set carries no offspring mass".into()));
                }
                LawData::Count {
                    set: set.clone(),
                    pows: count_in_set_series(p, set, n_max, 1, &opts)?,
                    cdfs: HashMap::new(),
                }
            }
        };
        Ok(ForestLaw { p, functional: functional.clone(), n_max, opts, data })
    }

    pub fn functional(&self) -> &Functional {
        &self.functional
    }

    pub fn n_max(&self) -> u64 {
        self.n_max
    }

    fn check_n(&self, n: i64) -> Result<()> {
        if n > self.n_max as i64 {
            return invalid(format!("n = {n} exceeds the table size {}", self.n_max));
        }
        Ok(())
    }

    /// `P[A(forest of k trees) <= n]`.
    pub fn cdf(&mut self, k: u64, n: i64) -> Result<f64> {
        self.check_n(n)?;
        if n < 0 {
            return Ok(0.0);
        }
        if k == 0 {
            return Ok(1.0);
        }
        let nu = n as usize;
        let p = self.p;
        let opts = self.opts;
        let n_max = self.n_max;
        Ok(match &mut self.data {
            LawData::Height { tail } => (k as f64 * (-tail[nu]).ln_1p()).exp(),
            LawData::MaxDegree { cdf } => cdf[nu].powf(k as f64),
            LawData::Width { cdfs } => {
                if k > n as u64 {
                    0.0
                } else {
                    if let std::collections::hash_map::Entry::Vacant(e) = cdfs.entry(n as u64) {
                        e.insert(width_cdf_vector(p, n as u64, &opts)?);
                    }
                    cdfs[&(n as u64)][k as usize]
                }
            }
            LawData::Progeny { walk, cdfs } => {
                let c = cdfs.entry(k).or_insert_with(|| cumulative(&progeny_pmf_from_walk(walk, k)));
                c[nu]
            }
            LawData::Count { set, pows, cdfs } => {
                if let std::collections::hash_map::Entry::Vacant(e) = cdfs.entry(k) {
                    let series = if (k as usize) < pows.len() {
                        pows[k as usize].clone()
                    } else {
                        let base = count_in_set_series(p, set, n_max, k as usize, &opts)?;
                        base[k as usize].clone()
                    };
                    e.insert(cumulative(&series));
                }
                cdfs[&k][nu]
            }
        })
    }

    /// `P[A(forest of k trees) > n]`.
    pub fn tail(&mut self, k: u64, n: i64) -> Result<f64> {
        self.check_n(n)?;
        if n < 0 {
            return Ok(1.0);
        }
        if k == 0 {
            return Ok(0.0);
        }
        if let LawData::Height { tail } = &self.data {
            let v = tail[n as usize];
            return Ok(-(k as f64 * (-v).ln_1p()).exp_m1());
        }
        Ok((1.0 - self.cdf(k, n)?).max(0.0))
    }

    /// `P[A(forest of k trees) = n]`.
    pub fn point(&mut self, k: u64, n: i64) -> Result<f64> {
        self.check_n(n)?;
        if n < 0 {
            return Ok(0.0);
        }
        if k == 0 {
            return Ok(if n == 0 { 1.0 } else { 0.0 });
        }
        let nu = n as usize;
        match &self.data {
            LawData::Progeny { walk, .. } => return Ok(progeny_pmf_from_walk(walk, k)[nu]),
            LawData::Count { pows, .. } if (k as usize) < pows.len() => return Ok(pows[k as usize][nu]),
            _ => {}
        }
        Ok((self.cdf(k, n)? - self.cdf(k, n - 1)?).max(0.0))
    }
}

fn cumulative(pmf: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    pmf.iter()
        .map(|x| {
            acc += x;
            acc.min(1.0)
        })
        .collect()
}

/// Columns `n`, `P[A > n]`, `P[A = n]` for the single tree and for forests.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailTable {
    pub functional: Functional,
    pub n_max: u64,
    pub columns: Vec<TailColumn>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailColumn {
    pub k: u64,
    pub tail: Vec<f64>,
    pub point: Vec<f64>,
}

impl TailTable {
    pub fn column(&self, k: u64) -> Option<&TailColumn> {
        self.columns.iter().find(|c| c.k == k)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["n".to_string(), "v_n".to_string(), "v_point_n".to_string()];
        for c in self.columns.iter().filter(|c| c.k != 1) {
            header.push(format!("v_n_k{}", c.k));
            header.push(format!("v_point_n_k{}", c.k));
        }
        w.write_record(&header)?;
        let single = self.column(1);
        for n in 0..=self.n_max as usize {
            let mut row = vec![n.to_string()];
            match single {
                Some(c) => {
                    row.push(c.tail[n].to_string());
                    row.push(c.point[n].to_string());
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            for c in self.columns.iter().filter(|c| c.k != 1) {
                row.push(c.tail[n].to_string());
                row.push(c.point[n].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exact table for `n = 0..=n_max` and forest sizes `ks` (1 is always included).
pub fn tail_table(
    p: &OffspringDist,
    functional: &Functional,
    n_max: u64,
    ks: &[u64],
    opts: EngineOptions,
) -> Result<TailTable> {
    let mut law = ForestLaw::new(p, functional, n_max, opts)?;
    let mut sizes = vec![1u64];
    for &k in ks {
        if k == 0 {
            return invalid("forest size must be positive");
        }
        if !sizes.contains(&k) {
            sizes.push(k);
        }
    }
    let mut columns = Vec::new();
    for k in sizes {
        let mut tail = Vec::with_capacity(n_max as usize + 1);
        let mut point = Vec::with_capacity(n_max as usize + 1);
        for n in 0..=n_max as i64 {
            tail.push(law.tail(k, n)?);
            point.push(law.point(k, n)?);
        }
        columns.push(TailColumn { k, tail, point });
    }
    Ok(TailTable { functional: functional.clone(), n_max, columns })
}

/// Point law of the maximum of `k` independent copies, by repeated
/// max-convolution of a point law: `P[max(X, Y) = n] = P[X = n] P[Y <= n] +
/// P[X < n] P[Y = n]`. Used to cross-check the closed form for max-type
/// functionals.
pub fn max_convolution(point: &[f64], k: u64) -> Vec<f64> {
    let mut acc = point.to_vec();
    for _ in 1..k {
        let acc_cdf = cumulative(&acc);
        let base_cdf = cumulative(point);
        acc = (0..point.len())
            .map(|n| {
                let acc_below = if n == 0 { 0.0 } else { acc_cdf[n - 1] };
                acc[n] * base_cdf[n] + acc_below * point[n]
            })
            .collect();
    }
    acc
}
