//! Monte Carlo checks on Brownian excursions: local time ratios weighted by
//! passage functionals against the spinal decomposition, conditioned
//! excursions against the immortal left path, and the maximum over a
//! Poisson family of excursions.

use serde::{Deserialize, Serialize};

use super::excursion::{BrownianModel, Excursion, ExcursionStream, RunToEnd, StopRule};
use super::spinal::{passage_from, PassageStats};
use crate::error::{invalid, Error, Result};
use crate::par::{chunk_sizes, draw_batch, map_chunks, CHUNK};
use crate::rng::RngState;
use crate::stats::{ks_two_sample, ratio_of_means, Estimate, Moments};

/// Settings shared by the excursion surveys.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyOptions {
    /// Excursions whose maximum stays below this level are skipped.
    pub reach: f64,
    /// Longest simulated stretch of a single excursion.
    pub horizon: f64,
    /// Level bandwidth for local times.
    pub bandwidth: f64,
    #[serde(skip)]
    pub workers: usize,
}

/// Bounded functionals of a first passage time. An unreached level counts
/// as `tau = +inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PassageTest {
    One,
    Before { time: f64 },
    Discount { rate: f64 },
}

impl PassageTest {
    pub fn eval(&self, tau: Option<f64>) -> f64 {
        match (*self, tau) {
            (PassageTest::One, _) => 1.0,
            (PassageTest::Before { time }, Some(t)) => f64::from(u8::from(t <= time)),
            (PassageTest::Discount { rate }, Some(t)) => (-rate * t).exp(),
            _ => 0.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PassageTest::One => "one".into(),
            PassageTest::Before { time } => format!("before_{time}"),
            PassageTest::Discount { rate } => format!("discount_{rate}"),
        }
    }
}

/// Excursions reaching `opts.reach`, produced chunk by chunk from
/// independent streams and mapped through `f`.
fn survey<T, F>(model: &BrownianModel, reps: u64, opts: &SurveyOptions, rng: &RngState, stop: impl Fn() -> Box<dyn StopRule> + Sync, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Excursion) -> T + Sync,
{
    let sizes = chunk_sizes(reps, CHUNK);
    let max_steps = (opts.horizon / model.dt).ceil() as usize;
    map_chunks(opts.workers, sizes.len(), |i| {
        let mut stream = ExcursionStream::new(*model, rng.split(i as u64));
        let mut rule = stop();
        let mut e = Excursion { dt: model.dt, beta: model.beta, offset: 0.0, heights: Vec::new(), complete: true };
        let mut out = Vec::with_capacity(sizes[i] as usize);
        for _ in 0..sizes[i] {
            e.complete = stream.next_reaching(opts.reach, max_steps, rule.as_mut(), &mut e.heights);
            out.push(f(&e));
        }
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

fn check_survey(model: &BrownianModel, opts: &SurveyOptions) -> Result<()> {
    if !(opts.reach > 0.0) || !(opts.horizon > model.dt) {
        return invalid("reach and horizon must be positive");
    }
    if !(opts.bandwidth > model.min_bandwidth()) {
        return invalid(format!("bandwidth {} is below the resolvable minimum {}", opts.bandwidth, model.min_bandwidth()));
    }
    Ok(())
}

/// Observed local time at `level` plus, for a cut-off excursion, the
/// expected remainder from its last height.
fn compensated_local_time(model: &BrownianModel, e: &Excursion, level: f64, eps: f64) -> f64 {
    let observed = e.local_time(level, eps).unwrap_or(0.0);
    if e.complete {
        observed
    } else {
        let last = *e.heights.last().unwrap_or(&0.0);
        observed + model.green(last, level + 0.5 * eps)
    }
}

// ---------------------------------------------------------------------------
// Local time weighted passage functionals

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BismutCase {
    /// Applied to the first passage at the level (left side).
    pub left: PassageTest,
    /// Applied to the time from the last passage at the level to the end of
    /// the excursion (right side).
    pub right: PassageTest,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BismutRow {
    pub left: PassageTest,
    pub right: PassageTest,
    /// `N[L^b F G] / N[L^{b0}]` from excursions.
    pub excursion_side: Estimate,
    /// `e^{-alpha (b - b0)} E[F(left)] E[G(right)]` from spinal paths.
    pub spinal_side: Estimate,
    pub relative_gap: f64,
    /// Discretization band for this row, zero when none is stored.
    pub band: f64,
    /// `|difference| <= 4 se + band`.
    pub within_envelope: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BismutReport {
    pub model: BrownianModel,
    pub level: f64,
    pub reference_level: f64,
    pub bandwidth: f64,
    pub excursions: u64,
    /// Excursions cut off at the horizon and completed by their expected
    /// remaining local time.
    pub truncated: u64,
    /// The reference local time summed to zero.
    pub degenerate: bool,
    pub rows: Vec<BismutRow>,
}

#[derive(Clone, Debug)]
struct LevelRecord {
    reference: f64,
    local: f64,
    passage: Option<f64>,
    /// Time from the last passage at the level to the end.
    tail: Option<f64>,
    complete: bool,
}

/// Compares local-time weighted passage functionals of excursions at
/// `level` with the left and right spinal paths. Everything is normalized by
/// the local time at `reference`, which must not exceed `level`; excursions
/// are taken to reach `reference`.
#[allow(clippy::too_many_arguments)]
pub fn verify_bismut(
    model: &BrownianModel,
    level: f64,
    reference: f64,
    cases: &[BismutCase],
    reps: u64,
    spinal_reps: u64,
    opts: &SurveyOptions,
    rng: &RngState,
) -> Result<BismutReport> {
    if !(reference > 0.0 && reference <= level) {
        return invalid("reference level must lie in (0, level]");
    }
    let opts = SurveyOptions { reach: reference, ..*opts };
    check_survey(model, &opts)?;
    let eps = opts.bandwidth;
    let records = survey(model, reps, &opts, &rng.split(0), || Box::new(RunToEnd), |e| LevelRecord {
        reference: compensated_local_time(model, e, reference, eps),
        local: compensated_local_time(model, e, level, eps),
        passage: e.first_passage(level),
        tail: if e.complete { e.last_passage(level).map(|s| e.lifetime() - s) } else { None },
        complete: e.complete,
    });
    let max_steps = usize::MAX;
    let left: Vec<Option<f64>> =
        draw_batch(spinal_reps, opts.workers, &rng.split(1), |r| passage_from(model, level, max_steps, r).map(|p| p.first_passage));
    let right: Vec<Option<f64>> =
        draw_batch(spinal_reps, opts.workers, &rng.split(2), |r| passage_from(model, level, max_steps, r).map(|p| p.first_passage));

    let den: Vec<f64> = records.iter().map(|r| r.reference).collect();
    let degenerate = den.iter().sum::<f64>() <= 0.0;
    let factor = (-model.alpha * (level - reference)).exp();
    let bands = DeltaBand::stored();
    let rows = cases
        .iter()
        .map(|case| {
            let f: Moments = left.iter().map(|&t| case.left.eval(t)).collect();
            let g: Moments = right.iter().map(|&t| case.right.eval(t)).collect();
            let num: Vec<f64> = records
                .iter()
                .map(|r| {
                    let gv = if r.complete || case.right == PassageTest::One { case.right.eval(r.tail) } else { g.mean };
                    r.local * case.left.eval(r.passage) * gv
                })
                .collect();
            let excursion_side = ratio_of_means(&num, &den);
            let spinal_side = Estimate {
                value: factor * f.mean * g.mean,
                se: factor * (g.mean * f.se()).hypot(f.mean * g.se()),
            };
            let diff = (excursion_side.value - spinal_side.value).abs();
            let band = bands.band(&bismut_key(model, case), model.dt).unwrap_or(0.0);
            BismutRow {
                left: case.left,
                right: case.right,
                excursion_side,
                spinal_side,
                relative_gap: diff / spinal_side.value.abs(),
                band,
                within_envelope: diff <= 4.0 * excursion_side.se.hypot(spinal_side.se) + band,
            }
        })
        .collect();
    Ok(BismutReport {
        model: *model,
        level,
        reference_level: reference,
        bandwidth: eps,
        excursions: records.len() as u64,
        truncated: records.iter().filter(|r| !r.complete).count() as u64,
        degenerate,
        rows,
    })
}

fn bismut_key(model: &BrownianModel, case: &BismutCase) -> String {
    format!("bismut:alpha={}:{}:{}", model.alpha, case.left.label(), case.right.label())
}

/// `N[L^b] / N[L^{b0}]` for each level, with the expected `e^{-alpha (b - b0)}`.
pub fn local_time_profile(
    model: &BrownianModel,
    levels: &[f64],
    reference: f64,
    reps: u64,
    opts: &SurveyOptions,
    rng: &RngState,
) -> Result<Vec<(f64, Estimate, f64)>> {
    if levels.iter().any(|&b| b < reference) {
        return invalid("levels must not lie below the reference level");
    }
    let opts = SurveyOptions { reach: reference, ..*opts };
    check_survey(model, &opts)?;
    let eps = opts.bandwidth;
    let rows: Vec<Vec<f64>> = survey(model, reps, &opts, rng, || Box::new(RunToEnd), |e| {
        std::iter::once(reference).chain(levels.iter().copied()).map(|b| compensated_local_time(model, e, b, eps)).collect()
    });
    let den: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    Ok(levels
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let num: Vec<f64> = rows.iter().map(|r| r[j + 1]).collect();
            (b, ratio_of_means(&num, &den), (-model.alpha * (b - reference)).exp())
        })
        .collect())
}

struct AboveLevel(f64);

impl StopRule for AboveLevel {
    fn stop(&mut self, h: f64, _: usize) -> bool {
        h > self.0
    }
}

/// `N[sup H > factor * level] / N[sup H > level]` from excursions reaching
/// `level`.
pub fn sup_tail_ratio(model: &BrownianModel, level: f64, factor: f64, reps: u64, workers: usize, rng: &RngState) -> Result<Estimate> {
    if !(level > 0.0 && factor >= 1.0) {
        return invalid("need a positive level and factor >= 1");
    }
    let high = factor * level;
    let opts = SurveyOptions { reach: level, horizon: f64::MAX.sqrt(), bandwidth: f64::INFINITY, workers };
    let hits: Vec<bool> = survey(model, reps, &opts, rng, || Box::new(AboveLevel(high)), |e| e.sup() > high);
    Ok(Estimate::proportion(hits.iter().filter(|&&h| h).count() as u64, reps))
}

// ---------------------------------------------------------------------------
// Conditioned excursions against the immortal left path

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExcursionFunctional {
    #[serde(alias = "sup")]
    SupHeight,
    #[serde(alias = "sigma", alias = "mass")]
    TotalMass,
    Width,
}

impl ExcursionFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            ExcursionFunctional::SupHeight => "sup_height",
            ExcursionFunctional::TotalMass => "total_mass",
            ExcursionFunctional::Width => "width",
        }
    }
}

/// Functionals of one simulated excursion. Values of a cut-off excursion are
/// lower bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub sup: f64,
    pub mass: f64,
    pub width: f64,
    pub complete: bool,
    pub passage: Option<f64>,
    /// Time spent below half the level before its first passage.
    pub occupation: f64,
}

impl PathSummary {
    fn value(&self, f: ExcursionFunctional) -> f64 {
        match f {
            ExcursionFunctional::SupHeight => self.sup,
            ExcursionFunctional::TotalMass => self.mass,
            ExcursionFunctional::Width => self.width,
        }
    }

    /// Whether `f > r`, or `None` if the cut-off path cannot tell.
    pub fn exceeds(&self, f: ExcursionFunctional, r: f64) -> Option<bool> {
        let v = self.value(f);
        if v > r {
            Some(true)
        } else if self.complete {
            Some(false)
        } else {
            None
        }
    }
}

/// Stops once sup, lifetime and width all exceed the threshold.
struct Saturation {
    threshold: f64,
    eps: f64,
    dt: f64,
    sup: f64,
    counts: Vec<u32>,
    top: u32,
}

impl StopRule for Saturation {
    fn reset(&mut self) {
        self.sup = 0.0;
        self.counts.clear();
        self.top = 0;
    }

    fn stop(&mut self, h: f64, steps: usize) -> bool {
        self.sup = self.sup.max(h);
        let k = (h / self.eps).floor() as usize;
        if self.counts.len() <= k {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
        self.top = self.top.max(self.counts[k]);
        self.sup > self.threshold
            && steps as f64 * self.dt > self.threshold
            && self.top as f64 * self.dt / self.eps > self.threshold
    }
}

fn summarize_path(e: &Excursion, level: f64, eps: f64) -> PathSummary {
    let passage_index = e.heights.iter().position(|&h| h >= level);
    let end = passage_index.unwrap_or(e.heights.len());
    let below = e.heights[1.min(end)..end].iter().filter(|&&h| h < 0.5 * level).count();
    PathSummary {
        sup: e.sup(),
        mass: e.lifetime(),
        width: e.width(eps),
        complete: e.complete,
        passage: passage_index.map(|i| i as f64 * e.dt),
        occupation: below as f64 * e.dt,
    }
}

/// Simulates `reps` excursions reaching `opts.reach`, following each until it
/// ends, the horizon passes, or all three functionals exceed `saturation`.
pub fn conditioned_survey(
    model: &BrownianModel,
    level: f64,
    saturation: f64,
    reps: u64,
    opts: &SurveyOptions,
    rng: &RngState,
) -> Result<Vec<PathSummary>> {
    check_survey(model, opts)?;
    let eps = opts.bandwidth;
    let dt = model.dt;
    Ok(survey(
        model,
        reps,
        opts,
        rng,
        || Box::new(Saturation { threshold: saturation, eps, dt, sup: 0.0, counts: Vec::new(), top: 0 }),
        |e| summarize_path(e, level, eps),
    ))
}

/// First passage statistics of the immortal left path.
pub fn immortal_passages(model: &BrownianModel, level: f64, reps: u64, workers: usize, rng: &RngState) -> Result<Vec<PassageStats>> {
    draw_batch(reps, workers, rng, |r| passage_from(model, level, usize::MAX, r))
        .into_iter()
        .map(|p| p.ok_or_else(|| Error::Budget("immortal path never reached the level".into())))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionedRow {
    pub r: f64,
    pub accepted: u64,
    /// Cut-off excursions whose functional could not be decided.
    pub undetermined: u64,
    pub ks_passage: f64,
    pub ks_occupation: f64,
    pub too_few: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionedReport {
    pub functional: ExcursionFunctional,
    pub level: f64,
    pub excursions: u64,
    pub reference_paths: u64,
    pub rows: Vec<ConditionedRow>,
}

impl ConditionedReport {
    pub fn decreasing(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => self.rows.len() > 1 && b.ks_passage < a.ks_passage,
            _ => false,
        }
    }

    pub fn final_distance(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.ks_passage)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["functional", "r", "accepted", "undetermined", "ks_passage", "ks_occupation", "too_few"])?;
        for row in &self.rows {
            w.write_record([
                self.functional.name().to_string(),
                row.r.to_string(),
                row.accepted.to_string(),
                row.undetermined.to_string(),
                format!("{:e}", row.ks_passage),
                format!("{:e}", row.ks_occupation),
                row.too_few.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fewest accepted excursions for a meaningful distance.
pub const MIN_ACCEPTED: u64 = 100;

/// KS distances between the pre-passage statistics of excursions with
/// `f > r` and those of the immortal left path.
pub fn conditioned_report(
    summaries: &[PathSummary],
    reference: &[PassageStats],
    functional: ExcursionFunctional,
    level: f64,
    r_grid: &[f64],
) -> ConditionedReport {
    let ref_passage: Vec<f64> = reference.iter().map(|p| p.first_passage).collect();
    let ref_occupation: Vec<f64> = reference.iter().map(|p| p.occupation_below_half).collect();
    let rows = r_grid
        .iter()
        .map(|&r| {
            let mut undetermined = 0;
            let mut passage = Vec::new();
            let mut occupation = Vec::new();
            for s in summaries {
                match s.exceeds(functional, r) {
                    Some(true) => {
                        passage.push(s.passage.unwrap_or(f64::INFINITY));
                        occupation.push(s.occupation);
                    }
                    Some(false) => {}
                    None => undetermined += 1,
                }
            }
            ConditionedRow {
                r,
                accepted: passage.len() as u64,
                undetermined,
                ks_passage: ks_two_sample(&passage, &ref_passage),
                ks_occupation: ks_two_sample(&occupation, &ref_occupation),
                too_few: (passage.len() as u64) < MIN_ACCEPTED,
            }
        })
        .collect();
    ConditionedReport {
        functional,
        level,
        excursions: summaries.len() as u64,
        reference_paths: reference.len() as u64,
        rows,
    }
}

/// Conditions excursions on `f > r` for each `r` and measures how far the
/// path before the first passage at `level` is from the immortal left path.
#[allow(clippy::too_many_arguments)]
pub fn verify_conditioned_limit(
    model: &BrownianModel,
    functional: ExcursionFunctional,
    level: f64,
    r_grid: &[f64],
    reps: u64,
    reference_reps: u64,
    opts: &SurveyOptions,
    rng: &RngState,
) -> Result<ConditionedReport> {
    if model.alpha != 0.0 {
        return invalid("the conditioned limit is checked for critical mechanisms");
    }
    if r_grid.is_empty() || !(level > 0.0) {
        return invalid("need a positive level and a nonempty r grid");
    }
    let r_max = r_grid.iter().cloned().fold(f64::MIN, f64::max);
    let summaries = conditioned_survey(model, level, r_max, reps, opts, &rng.split(0))?;
    let reference = immortal_passages(model, level, reference_reps, opts.workers, &rng.split(1))?;
    Ok(conditioned_report(&summaries, &reference, functional, level, r_grid))
}

// ---------------------------------------------------------------------------
// Maximum over a Poisson family of excursions

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxIdentityRow {
    pub r: f64,
    /// `P[max H > r]` over the excursions up to local time `x`.
    pub empirical: Estimate,
    /// `1 - exp(-x N^[sup H > r])` from an independent excursion count,
    /// averaged over the realized local times.
    pub predicted: Estimate,
    /// Closed form `1 - exp(-x N[sup H > r])`.
    pub exact: f64,
    pub band: f64,
    pub within: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxIdentityReport {
    pub model: BrownianModel,
    pub x: f64,
    /// Mean local time actually consumed per run.
    pub realized_x: f64,
    /// Local time behind the excursion count.
    pub local_time: f64,
    pub rows: Vec<MaxIdentityRow>,
}

/// `N[sup H > r]` for the Brownian mechanism.
pub fn sup_tail_rate(model: &BrownianModel, r: f64) -> f64 {
    let (a, b) = (model.alpha, model.beta);
    if a == 0.0 {
        1.0 / (b * r)
    } else {
        a / (b * (a * r).exp_m1())
    }
}

const LOCAL_TIME_PIECE: f64 = 64.0;

/// Checks that the largest excursion height up to local time `x` has the law
/// of the maximum over a Poisson family with intensity `x N`.
pub fn verify_max_identity(
    model: &BrownianModel,
    x: f64,
    r_grid: &[f64],
    reps: u64,
    local_time: f64,
    workers: usize,
    rng: &RngState,
) -> Result<MaxIdentityReport> {
    if !(x > 0.0 && local_time > 0.0) || r_grid.iter().any(|&r| !(r > 0.0)) {
        return invalid("x, local time and levels must be positive");
    }
    let cap = r_grid.iter().cloned().fold(0.0, f64::max);
    let sizes = chunk_sizes(reps, CHUNK);
    // Each run overshoots `x` by the local time of its last reflected step,
    // so the prediction uses the realized local time.
    let runs: Vec<(f64, f64)> = map_chunks(workers, sizes.len(), |i| {
        let mut s = ExcursionStream::new(*model, rng.split(0).split(i as u64));
        (0..sizes[i])
            .map(|_| {
                let start = s.local_time_at_zero;
                let top = s.maxima_until(start + x, cap).into_iter().fold(0.0, f64::max);
                (top, s.local_time_at_zero - start)
            })
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect();
    let pieces = (local_time / LOCAL_TIME_PIECE).ceil().max(1.0) as usize;
    let counted: Vec<(Vec<f64>, f64)> = map_chunks(workers, pieces, |i| {
        let mut s = ExcursionStream::new(*model, rng.split(1).split(i as u64));
        let m = s.maxima_until(LOCAL_TIME_PIECE, cap);
        (m, s.local_time_at_zero)
    });
    let total: f64 = counted.iter().map(|c| c.1).sum();
    let bands = DeltaBand::stored();
    let rows = r_grid
        .iter()
        .map(|&r| {
            let hits = runs.iter().filter(|run| run.0 > r).count() as u64;
            let empirical = Estimate::proportion(hits, reps);
            let count = counted.iter().map(|c| c.0.iter().filter(|&&m| m > r).count()).sum::<usize>() as f64;
            let rate = count / total;
            let n = runs.len() as f64;
            let p = 1.0 - runs.iter().map(|run| (-run.1 * rate).exp()).sum::<f64>() / n;
            let slope = runs.iter().map(|run| run.1 * (-run.1 * rate).exp()).sum::<f64>() / n;
            let predicted = Estimate { value: p, se: slope * count.sqrt() / total };
            let band = bands.band(&format!("max_identity:x={x}:r={r}"), model.dt).unwrap_or(0.0);
            MaxIdentityRow {
                r,
                empirical,
                predicted,
                exact: 1.0 - (-x * sup_tail_rate(model, r)).exp(),
                band,
                within: (empirical.value - predicted.value).abs() <= 4.0 * empirical.se.hypot(predicted.se) + band,
            }
        })
        .collect();
    let realized_x = runs.iter().map(|run| run.1).sum::<f64>() / runs.len().max(1) as f64;
    Ok(MaxIdentityReport { model: *model, x, realized_x, local_time: total, rows })
}

// ---------------------------------------------------------------------------
// Discretization bands

/// One quantity measured at `dt` and `dt / 4`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandEntry {
    pub name: String,
    pub dt: f64,
    pub coarse: f64,
    pub fine: f64,
}

impl BandEntry {
    pub fn band(&self) -> f64 {
        (self.coarse - self.fine).abs()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaBand {
    pub seed: u64,
    pub entries: Vec<BandEntry>,
}

const STORED_BAND: &str = include_str!("../../data/delta_band.json");

impl DeltaBand {
    /// The refinement study shipped with the crate.
    pub fn stored() -> DeltaBand {
        serde_json::from_str(STORED_BAND).unwrap_or_default()
    }

    /// Band for `name` measured at this `dt`.
    pub fn band(&self, name: &str, dt: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name && (e.dt - dt).abs() <= 1e-12 * dt)
            .map(BandEntry::band)
    }
}

/// The Bismut cases used by the refinement study and the acceptance run.
pub fn standard_bismut_cases() -> Vec<BismutCase> {
    let one = PassageTest::One;
    vec![
        BismutCase { left: one, right: one },
        BismutCase { left: PassageTest::Before { time: 1.0 }, right: one },
        BismutCase { left: PassageTest::Before { time: 0.2 }, right: one },
        BismutCase { left: PassageTest::Discount { rate: 5.0 }, right: one },
        BismutCase { left: one, right: PassageTest::Before { time: 0.2 } },
    ]
}

/// Settings of the Bismut runs: level 1 against reference 0.5, bandwidth
/// 0.01, horizon 4.
pub const BISMUT_LEVEL: f64 = 1.0;
pub const BISMUT_REFERENCE: f64 = 0.5;
pub const BISMUT_BANDWIDTH: f64 = 0.01;
pub const BISMUT_HORIZON: f64 = 4.0;
pub const MAX_IDENTITY_X: f64 = 1.0;
pub const MAX_IDENTITY_LEVELS: [f64; 3] = [0.5, 1.0, 2.0];
pub const SUP_RATIO_LEVELS: [f64; 2] = [0.5, 1.0];

pub fn sup_ratio_key(level: f64) -> String {
    format!("sup_ratio:b={level}")
}

/// Runs every banded quantity at `dt` and `dt / 4` with common seeds.
pub fn delta_band_study(bismut_dt: f64, max_dt: f64, reps: u64, workers: usize, seed: u64) -> Result<DeltaBand> {
    let rng = RngState::new(seed);
    let mut entries = Vec::new();
    for alpha in [0.0, 1.0] {
        let mut values = Vec::new();
        for dt in [bismut_dt, bismut_dt / 4.0] {
            let model = BrownianModel::new(alpha, 1.0, dt)?;
            let opts = SurveyOptions { reach: BISMUT_REFERENCE, horizon: BISMUT_HORIZON, bandwidth: BISMUT_BANDWIDTH, workers };
            let cases = standard_bismut_cases();
            let report = verify_bismut(&model, BISMUT_LEVEL, BISMUT_REFERENCE, &cases, reps, reps, &opts, &rng.split(alpha as u64))?;
            values.push(report.rows.iter().map(|r| (bismut_key(&model, &BismutCase { left: r.left, right: r.right }), r.excursion_side.value)).collect::<Vec<_>>());
        }
        for ((name, coarse), (_, fine)) in values[0].iter().zip(&values[1]) {
            entries.push(BandEntry { name: name.clone(), dt: bismut_dt, coarse: *coarse, fine: *fine });
        }
    }
    let mut max_values = Vec::new();
    for dt in [max_dt, max_dt / 4.0] {
        let model = BrownianModel::new(0.0, 1.0, dt)?;
        let report = verify_max_identity(&model, MAX_IDENTITY_X, &MAX_IDENTITY_LEVELS, reps, reps as f64, workers, &rng.split(7))?;
        max_values.push(report.rows.iter().map(|r| r.empirical.value).collect::<Vec<_>>());
    }
    for (i, r) in MAX_IDENTITY_LEVELS.iter().enumerate() {
        entries.push(BandEntry {
            name: format!("max_identity:x={MAX_IDENTITY_X}:r={r}"),
            dt: max_dt,
            coarse: max_values[0][i],
            fine: max_values[1][i],
        });
    }
    for b in SUP_RATIO_LEVELS {
        let mut v = Vec::new();
        for dt in [max_dt, max_dt / 4.0] {
            let model = BrownianModel::new(0.0, 1.0, dt)?;
            v.push(sup_tail_ratio(&model, b, 2.0, reps, workers, &rng.split(8))?.value);
        }
        entries.push(BandEntry { name: sup_ratio_key(b), dt: max_dt, coarse: v[0], fine: v[1] });
    }
    Ok(DeltaBand { seed, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passage_tests() {
        assert_eq!(PassageTest::One.eval(None), 1.0);
        assert_eq!(PassageTest::Before { time: 1.0 }.eval(Some(1.0)), 1.0);
        assert_eq!(PassageTest::Before { time: 1.0 }.eval(None), 0.0);
        assert!((PassageTest::Discount { rate: 2.0 }.eval(Some(0.5)) - (-1f64).exp()).abs() < 1e-15);
        let p: PassageTest = serde_json::from_str(r#"{"kind":"before","time":0.2}"#).unwrap();
        assert_eq!(p, PassageTest::Before { time: 0.2 });
    }

    #[test]
    fn exceedance_of_cut_paths() {
        let s = PathSummary { sup: 2.0, mass: 5.0, width: 0.5, complete: false, passage: Some(0.1), occupation: 0.0 };
        assert_eq!(s.exceeds(ExcursionFunctional::SupHeight, 1.0), Some(true));
        assert_eq!(s.exceeds(ExcursionFunctional::Width, 1.0), None);
        let done = PathSummary { complete: true, ..s };
        assert_eq!(done.exceeds(ExcursionFunctional::Width, 1.0), Some(false));
    }

    #[test]
    fn sup_rate_limits() {
        let m0 = BrownianModel::new(0.0, 2.0, 1e-4).unwrap();
        let m1 = BrownianModel::new(1e-8, 2.0, 1e-4).unwrap();
        assert!((sup_tail_rate(&m0, 0.5) - 1.0).abs() < 1e-15);
        assert!((sup_tail_rate(&m1, 0.5) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn stored_band_parses() {
        let b = DeltaBand::stored();
        assert!(b.entries.iter().all(|e| e.dt > 0.0 && e.band().is_finite()));
    }

    #[test]
    fn survey_is_worker_invariant() {
        let m = BrownianModel::new(0.0, 1.0, 1e-3).unwrap();
        let o1 = SurveyOptions { reach: 0.2, horizon: 5.0, bandwidth: 0.05, workers: 1 };
        let o3 = SurveyOptions { workers: 3, ..o1 };
        let rng = RngState::new(4);
        let a = conditioned_survey(&m, 0.5, 1.0, 5000, &o1, &rng).unwrap();
        let b = conditioned_survey(&m, 0.5, 1.0, 5000, &o3, &rng).unwrap();
        assert_eq!(a, b);
    }
}
