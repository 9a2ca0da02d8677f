//! Convergence experiments for conditioned Galton-Watson trees: total
//! variation to the immortal prefix law under tail and point conditionings,
//! forest ratio limits, and exploratory runs for subcritical heavy tails.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::{
    capped_spine_prefix_prob, conditioned_prefix_law, immortal_prefix_law, immortal_prefix_prob, max_convolution,
    tv_distance, Condition, EngineOptions, ForestLaw, PrefixEnumeration, PrefixLaw,
};
use crate::offspring::{Criticality, OffspringDist};
use crate::par::{chunk_sizes, map_chunks};
use crate::rng::RngState;
use crate::samplers::{conditioned_batch, event_probability, sample_gw, GwDraw, RejectionOptions, BATCH_CHUNK};
use crate::stats::Estimate;
use crate::tree::{Functional, PlaneTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Mode {
    Exact,
    MonteCarlo { reps: u64 },
}

impl Mode {
    fn label(&self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo { .. } => "monte_carlo",
        }
    }
}

/// Randomness, parallelism and budgets shared by the experiments.
#[derive(Clone, Debug)]
pub struct LabContext {
    pub rng: RngState,
    pub workers: usize,
    pub rejection: RejectionOptions,
    pub enumeration: PrefixEnumeration,
    pub engine: EngineOptions,
}

impl LabContext {
    pub fn new(seed: u64, workers: usize) -> Self {
        LabContext {
            rng: RngState::new(seed),
            workers,
            rejection: RejectionOptions::default(),
            enumeration: PrefixEnumeration::default(),
            engine: EngineOptions::default(),
        }
    }
}

/// One number in a report. Monte Carlo entries carry a standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: u64,
    pub quantity: String,
    pub k: u64,
    pub r: u64,
    pub value: Option<f64>,
    pub se: Option<f64>,
    pub limit: Option<f64>,
    pub exact: bool,
    pub note: String,
}

impl ReportRow {
    fn new(n: u64, quantity: &str) -> Self {
        ReportRow {
            n,
            quantity: quantity.to_string(),
            k: 1,
            r: 0,
            value: None,
            se: None,
            limit: None,
            exact: true,
            note: String::new(),
        }
    }

    fn exact_value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    fn estimate(mut self, e: Estimate) -> Self {
        self.value = Some(e.value);
        self.se = Some(e.se);
        self.exact = false;
        self
    }

    fn limit(mut self, l: f64) -> Self {
        self.limit = Some(l);
        self
    }

    fn kr(mut self, k: u64, r: u64) -> Self {
        self.k = k;
        self.r = r;
        self
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.note = s.into();
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub offspring: String,
    pub functional: Functional,
    pub conditioning: String,
    pub prefix_height: Option<u32>,
    pub n_grid: Vec<u64>,
    pub mode: String,
    /// Set when the functional's support ends inside the grid, so the last
    /// conditionings are impossible.
    pub degenerate_lattice: bool,
    pub exploratory: bool,
    /// Listed mass and deficiency of the immortal reference law (exact mode).
    pub reference_total: Option<f64>,
    pub reference_deficiency: Option<f64>,
    pub rows: Vec<ReportRow>,
}

impl ConvergenceReport {
    /// `(n, value)` pairs for one quantity, skipping empty entries.
    pub fn series(&self, quantity: &str) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.quantity == quantity)
            .filter_map(|r| r.value.map(|v| (r.n, v)))
            .collect()
    }

    pub fn find(&self, quantity: &str, n: u64, k: u64, r: u64) -> Option<&ReportRow> {
        self.rows.iter().find(|row| row.quantity == quantity && row.n == n && row.k == k && row.r == r)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "quantity", "k", "r", "value", "se", "limit", "exact", "note"])?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.n.to_string(),
                row.quantity.clone(),
                row.k.to_string(),
                row.r.to_string(),
                opt(row.value),
                opt(row.se),
                opt(row.limit),
                row.exact.to_string(),
                row.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() {
        return invalid("the n grid is empty");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("the n grid must be strictly increasing");
    }
    Ok(())
}

/// Span of the lattice carrying `L - 1`: the gcd of the positive degrees in
/// the support, since `L - 1` is the sum of all out-degrees.
pub fn progeny_span(p: &OffspringDist) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    p.support().iter().map(|&k| k as u64).fold(0, gcd).max(1)
}

/// Powers of two from 2 up to `max`, moved onto the support lattice of the
/// functional under point conditioning.
pub fn default_grid(p: &OffspringDist, f: &Functional, point: bool, max: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    let mut n = 2;
    while n <= max {
        let m = match (point, f) {
            (true, Functional::TotalProgeny) => {
                let g = progeny_span(p);
                1 + g * (n - 1).div_ceil(g)
            }
            _ => n,
        };
        if out.last() != Some(&m) {
            out.push(m);
        }
        n *= 2;
    }
    out
}

/// TV between an empirical law and an exact law known only on the empirical
/// support: `listed + deficiency / 2` is the exact distance to the reference.
/// The standard error comes from the delta method on the sample frequencies.
fn empirical_tv(sample: &PrefixLaw, count: u64, reference: impl Fn(&PlaneTree) -> Result<f64>) -> Result<Estimate> {
    let mut half_abs = 0.0;
    let mut ref_mass = 0.0;
    let (mut s1, mut s2) = (0.0, 0.0);
    for (t, &q_hat) in &sample.probs {
        let q = reference(t)?;
        ref_mass += q;
        half_abs += 0.5 * (q_hat - q).abs();
        let s = 0.5 * (q_hat - q).signum();
        s1 += s * q_hat;
        s2 += s * s * q_hat;
    }
    let value = (half_abs + 0.5 * (1.0 - ref_mass).max(0.0)).min(1.0);
    let se = ((s2 - s1 * s1).max(0.0) / count.max(1) as f64).sqrt();
    Ok(Estimate { value, se })
}

fn require_critical(p: &OffspringDist, what: &str) -> Result<()> {
    if p.classify() != Criticality::Critical {
        return invalid(format!("{what} needs a critical offspring law, got mean {}", p.mean()));
    }
    Ok(())
}

/// Exact event probabilities and ratio diagnostics at level `n`.
fn exact_diagnostics(p: &OffspringDist, f: &Functional, n: u64, opts: EngineOptions) -> Result<Vec<ReportRow>> {
    let mut law = ForestLaw::new(p, f, n, opts)?;
    let ni = n as i64;
    let v = law.tail(1, ni)?;
    let v2 = law.tail(2, ni)?;
    let pt = law.point(1, ni)?;
    let pt2 = law.point(2, ni)?;
    let prev = law.tail(1, ni - 1)?;
    let ratio = |a: f64, b: f64, row: ReportRow| {
        if b > 0.0 {
            row.exact_value(a / b)
        } else {
            row.note("zero denominator")
        }
    };
    Ok(vec![
        ReportRow::new(n, "tail_prob").exact_value(v),
        ReportRow::new(n, "point_prob").exact_value(pt),
        ratio(v2, v, ReportRow::new(n, "tail_ratio").kr(2, 0).limit(2.0)),
        ratio(pt2, pt, ReportRow::new(n, "point_ratio").kr(2, 0).limit(2.0)),
        ratio(prev, v, ReportRow::new(n, "shift_ratio").kr(1, 1).limit(1.0)),
    ])
}

fn zero_event_row(n: u64) -> ReportRow {
    ReportRow::new(n, "tv").note("skipped: conditioning event has probability zero")
}

fn convergence(
    p: &OffspringDist,
    f: &Functional,
    b: u32,
    grid: &[u64],
    mode: Mode,
    ctx: &LabContext,
    point: bool,
) -> Result<ConvergenceReport> {
    check_grid(grid)?;
    let cond_at = |n: u64| if point { Condition::Point(n) } else { Condition::Tail(n) };
    let mut report = ConvergenceReport {
        offspring: p.label(),
        functional: f.clone(),
        conditioning: if point { "point" } else { "tail" }.to_string(),
        prefix_height: Some(b),
        n_grid: grid.to_vec(),
        mode: mode.label().to_string(),
        degenerate_lattice: false,
        exploratory: false,
        reference_total: None,
        reference_deficiency: None,
        rows: Vec::new(),
    };
    let mut skipped_last = false;
    match mode {
        Mode::Exact => {
            let reference = immortal_prefix_law(p, b, &ctx.enumeration)?;
            report.reference_total = Some(reference.total());
            report.reference_deficiency = Some(reference.deficiency);
            let per_n = map_chunks(ctx.workers, grid.len(), |i| -> Result<(Vec<ReportRow>, bool)> {
                let n = grid[i];
                let mut rows = exact_diagnostics(p, f, n, ctx.engine)?;
                match conditioned_prefix_law(p, f, cond_at(n), b, &ctx.enumeration, ctx.engine) {
                    Ok(law) => {
                        let tv = tv_distance(&law, &reference)?;
                        rows.insert(
                            0,
                            ReportRow::new(n, "tv").exact_value(tv.upper).note(format!("listed part {:e}", tv.listed)),
                        );
                        Ok((rows, false))
                    }
                    Err(Error::ZeroProbability(_)) => {
                        rows.insert(0, zero_event_row(n));
                        Ok((rows, true))
                    }
                    Err(e) => Err(e),
                }
            });
            for part in per_n {
                let (rows, skipped) = part?;
                report.rows.extend(rows);
                skipped_last = skipped;
            }
        }
        Mode::MonteCarlo { reps } => {
            for (i, &n) in grid.iter().enumerate() {
                let cond = cond_at(n);
                if event_probability(p, f, cond) == Some(0.0) {
                    report.rows.push(zero_event_row(n));
                    skipped_last = true;
                    continue;
                }
                skipped_last = false;
                let rng = ctx.rng.split(i as u64);
                let batch = conditioned_batch(p, f, cond, reps, &rng, &ctx.rejection, ctx.workers, |t| t.restrict(b))?;
                let law = PrefixLaw::empirical(b, batch.items.iter());
                let tv = empirical_tv(&law, reps, |t| immortal_prefix_prob(p, t, b))?;
                let acc = Estimate::proportion(batch.items.len() as u64, batch.attempts);
                report.rows.push(ReportRow::new(n, "tv").estimate(tv));
                let q = if point { "point_prob" } else { "tail_prob" };
                report.rows.push(
                    ReportRow::new(n, q)
                        .estimate(acc)
                        .note(format!("acceptance rate; {} overflows", batch.overflows)),
                );
            }
        }
    }
    report.degenerate_lattice = skipped_last;
    Ok(report)
}

/// TV between `r_b` of the tree conditioned on `A > n` and `r_b` of the
/// immortal tree, along `grid`.
pub fn run_tail_convergence(
    p: &OffspringDist,
    f: &Functional,
    b: u32,
    grid: &[u64],
    mode: Mode,
    ctx: &LabContext,
) -> Result<ConvergenceReport> {
    require_critical(p, "tail conditioning")?;
    convergence(p, f, b, grid, mode, ctx, false)
}

/// Same as [`run_tail_convergence`] for `A = n`. Grid points off the support
/// lattice are reported as skipped. Height may use a subcritical law.
pub fn run_point_convergence(
    p: &OffspringDist,
    f: &Functional,
    b: u32,
    grid: &[u64],
    mode: Mode,
    ctx: &LabContext,
) -> Result<ConvergenceReport> {
    if !(matches!(f, Functional::Height) && p.classify() == Criticality::Subcritical) {
        require_critical(p, "point conditioning")?;
    }
    convergence(p, f, b, grid, mode, ctx, true)
}

/// Outcome of Monte Carlo draws of an event on forests of `k` trees.
struct EventCount {
    hits: u64,
    trials: u64,
    unknown: u64,
}

impl EventCount {
    fn estimate(&self) -> Estimate {
        Estimate::proportion(self.hits, self.trials)
    }
}

fn mc_event(p: &OffspringDist, f: &Functional, cond: Condition, k: u64, reps: u64, rng: &RngState, ctx: &LabContext) -> EventCount {
    let sizes = chunk_sizes(reps, BATCH_CHUNK);
    let cap = ctx.rejection.node_cap;
    let parts = map_chunks(ctx.workers, sizes.len(), |i| {
        let mut r = rng.split(i as u64);
        let mut c = EventCount { hits: 0, trials: 0, unknown: 0 };
        'rep: for _ in 0..sizes[i] {
            let mut forest = Vec::with_capacity(k as usize);
            for _ in 0..k {
                match sample_gw(p, &mut r, cap) {
                    GwDraw::Tree(t) => forest.push(t),
                    GwDraw::Overflow => {
                        // Only the vertex count is known for an overflowed tree.
                        if matches!((f, cond), (Functional::TotalProgeny, Condition::Tail(n)) if (n as usize) < cap) {
                            c.hits += 1;
                            c.trials += 1;
                        } else {
                            c.unknown += 1;
                        }
                        continue 'rep;
                    }
                }
            }
            c.trials += 1;
            if cond.holds(crate::tree::forest_functional(&forest, f)) {
                c.hits += 1;
            }
        }
        c
    });
    parts.into_iter().fold(EventCount { hits: 0, trials: 0, unknown: 0 }, |mut a, c| {
        a.hits += c.hits;
        a.trials += c.trials;
        a.unknown += c.unknown;
        a
    })
}

/// Tables of `v_n(k) / v_n` (limit k), `v_{n-r}(k) / v_n(k)` (limit 1) and
/// `P^(k)[A = n] / P[A = n]` (limit k). For max-type functionals the closed
/// form `(1 - v_n)^k - (1 - v_{n-1})^k` is compared with the max-convolution
/// of the single-tree point law.
pub fn run_ratio_limits(
    p: &OffspringDist,
    f: &Functional,
    k_list: &[u64],
    r_list: &[u64],
    grid: &[u64],
    mode: Mode,
    ctx: &LabContext,
) -> Result<ConvergenceReport> {
    require_critical(p, "ratio limits")?;
    check_grid(grid)?;
    if k_list.contains(&0) {
        return invalid("forest sizes must be positive");
    }
    let mut report = ConvergenceReport {
        offspring: p.label(),
        functional: f.clone(),
        conditioning: "ratio".to_string(),
        prefix_height: None,
        n_grid: grid.to_vec(),
        mode: mode.label().to_string(),
        degenerate_lattice: false,
        exploratory: false,
        reference_total: None,
        reference_deficiency: None,
        rows: Vec::new(),
    };
    let max_type = matches!(f, Functional::Height | Functional::MaxOutDegree);
    match mode {
        Mode::Exact => {
            let n_max = *grid.last().unwrap();
            let mut law = ForestLaw::new(p, f, n_max, ctx.engine)?;
            let single_point: Vec<f64> =
                (0..=n_max as i64).map(|m| law.point(1, m)).collect::<Result<_>>()?;
            for &n in grid {
                let ni = n as i64;
                let v1 = law.tail(1, ni)?;
                let pt1 = law.point(1, ni)?;
                for &k in k_list {
                    let vk = law.tail(k, ni)?;
                    let row = ReportRow::new(n, "tail_ratio").kr(k, 0).limit(k as f64);
                    report.rows.push(if v1 > 0.0 { row.exact_value(vk / v1) } else { row.note("zero denominator") });
                    let ptk = law.point(k, ni)?;
                    let row = ReportRow::new(n, "point_ratio").kr(k, 0).limit(k as f64);
                    report.rows.push(if pt1 > 0.0 { row.exact_value(ptk / pt1) } else { row.note("zero denominator") });
                    for &r in r_list {
                        let shifted = law.tail(k, ni - r as i64)?;
                        let row = ReportRow::new(n, "shift_ratio").kr(k, r).limit(1.0);
                        report.rows.push(if vk > 0.0 { row.exact_value(shifted / vk) } else { row.note("zero denominator") });
                    }
                    if max_type {
                        let prev = law.tail(1, ni - 1)?;
                        let closed = (1.0 - v1).powi(k as i32) - (1.0 - prev).powi(k as i32);
                        let conv = max_convolution(&single_point[..=n as usize], k)[n as usize];
                        report.rows.push(ReportRow::new(n, "max_closed_form").kr(k, 0).exact_value(closed));
                        report.rows.push(ReportRow::new(n, "max_convolution").kr(k, 0).exact_value(conv));
                        report.rows.push(ReportRow::new(n, "max_gap").kr(k, 0).exact_value((closed - conv).abs()).limit(0.0));
                    }
                }
            }
        }
        Mode::MonteCarlo { reps } => {
            for (i, &n) in grid.iter().enumerate() {
                let base = ctx.rng.split(i as u64);
                let mut stream = 0u64;
                let mut next = || {
                    stream += 1;
                    base.split(1 << 32 | stream)
                };
                let tail1 = mc_event(p, f, Condition::Tail(n), 1, reps, &next(), ctx);
                let point1 = mc_event(p, f, Condition::Point(n), 1, reps, &next(), ctx);
                for &k in k_list {
                    let tailk = mc_event(p, f, Condition::Tail(n), k, reps, &next(), ctx);
                    let pointk = mc_event(p, f, Condition::Point(n), k, reps, &next(), ctx);
                    let unknown = tail1.unknown + tailk.unknown;
                    let note = if unknown > 0 { format!("{unknown} overflowed draws excluded") } else { String::new() };
                    report.rows.push(
                        ratio_row(ReportRow::new(n, "tail_ratio").kr(k, 0).limit(k as f64), &tailk, &tail1).note(note),
                    );
                    report.rows.push(ratio_row(ReportRow::new(n, "point_ratio").kr(k, 0).limit(k as f64), &pointk, &point1));
                    for &r in r_list {
                        let shifted = if n >= r {
                            mc_event(p, f, Condition::Tail(n - r), k, reps, &next(), ctx)
                        } else {
                            EventCount { hits: reps, trials: reps, unknown: 0 }
                        };
                        report.rows.push(ratio_row(ReportRow::new(n, "shift_ratio").kr(k, r).limit(1.0), &shifted, &tailk));
                    }
                }
            }
        }
    }
    Ok(report)
}

fn ratio_row(row: ReportRow, num: &EventCount, den: &EventCount) -> ReportRow {
    if den.hits == 0 {
        return row.note("zero denominator");
    }
    row.estimate(num.estimate().ratio(&den.estimate()))
}

/// Monte Carlo run for a subcritical law conditioned on `A > n`, comparing
/// the empirical prefix law with the immortal law and with the law whose
/// spine is cut after a geometric number of generations. No winner is
/// asserted; the report is marked exploratory.
pub fn probe_conjectures(
    p: &OffspringDist,
    f: &Functional,
    b: u32,
    grid: &[u64],
    reps: u64,
    ctx: &LabContext,
) -> Result<ConvergenceReport> {
    check_grid(grid)?;
    if p.is_supercritical() {
        return invalid("the probe needs a subcritical or critical offspring law");
    }
    let mut report = ConvergenceReport {
        offspring: p.label(),
        functional: f.clone(),
        conditioning: "tail".to_string(),
        prefix_height: Some(b),
        n_grid: grid.to_vec(),
        mode: Mode::MonteCarlo { reps }.label().to_string(),
        degenerate_lattice: false,
        exploratory: true,
        reference_total: None,
        reference_deficiency: None,
        rows: Vec::new(),
    };
    let mut cache: BTreeMap<PlaneTree, (f64, f64)> = BTreeMap::new();
    for (i, &n) in grid.iter().enumerate() {
        let rng = ctx.rng.split(i as u64);
        let batch =
            conditioned_batch(p, f, Condition::Tail(n), reps, &rng, &ctx.rejection, ctx.workers, |t| t.restrict(b))?;
        let law = PrefixLaw::empirical(b, batch.items.iter());
        for t in law.probs.keys() {
            if !cache.contains_key(t) {
                let pair = (immortal_prefix_prob(p, t, b)?, capped_spine_prefix_prob(p, t, b)?);
                cache.insert(t.clone(), pair);
            }
        }
        let tv_immortal = empirical_tv(&law, reps, |t| Ok(cache[t].0))?;
        let tv_capped = empirical_tv(&law, reps, |t| Ok(cache[t].1))?;
        report.rows.push(ReportRow::new(n, "tv_immortal").estimate(tv_immortal));
        report.rows.push(ReportRow::new(n, "tv_capped_spine").estimate(tv_capped));
        report.rows.push(
            ReportRow::new(n, "tail_prob")
                .estimate(Estimate::proportion(batch.items.len() as u64, batch.attempts))
                .note("acceptance rate"),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_grid_follows_the_progeny_lattice() {
        let p = OffspringDist::binary_critical();
        assert_eq!(progeny_span(&p), 2);
        assert_eq!(default_grid(&p, &Functional::TotalProgeny, true, 64), vec![3, 5, 9, 17, 33, 65]);
        assert_eq!(default_grid(&p, &Functional::Height, true, 16), vec![2, 4, 8, 16]);
        let g = OffspringDist::geometric(0.5, Some(60)).unwrap();
        assert_eq!(progeny_span(&g), 1);
    }

    #[test]
    fn height_prefix_of_depth_one_is_exact() {
        let p = OffspringDist::binary_critical();
        let ctx = LabContext::new(1, 1);
        let rep = run_tail_convergence(&p, &Functional::Height, 1, &[1, 4, 9], Mode::Exact, &ctx).unwrap();
        for (_, tv) in rep.series("tv") {
            assert!(tv.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let p = OffspringDist::binary_critical();
        let ctx = LabContext::new(1, 1);
        assert!(run_tail_convergence(&p, &Functional::Height, 1, &[4, 2], Mode::Exact, &ctx).is_err());
        assert!(run_tail_convergence(&p, &Functional::Height, 1, &[], Mode::Exact, &ctx).is_err());
    }
}
