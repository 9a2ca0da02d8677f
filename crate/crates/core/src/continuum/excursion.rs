//! Height process of the Brownian mechanism `psi(l) = alpha l + beta l^2`:
//! `H = (X - I) / beta` with `X_t = -alpha t + sqrt(2 beta) B_t` and `I` its
//! running infimum, simulated on a grid by the Lindley recursion.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianModel {
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
}

impl BrownianModel {
    /// Checks `beta > 0`, `alpha >= 0` and the step guard
    /// `dt <= 1e-3 beta / max(alpha, 1)^2`.
    pub fn new(alpha: f64, beta: f64, dt: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return invalid("beta must be positive");
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return invalid("alpha must be nonnegative");
        }
        let limit = 1e-3 * beta / alpha.max(1.0).powi(2);
        if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
            return invalid(format!("time step {dt} violates the guard dt <= {limit}"));
        }
        Ok(BrownianModel { alpha, beta, dt })
    }

    /// Mean and standard deviation of one increment of `X`.
    pub fn increment(&self) -> (f64, f64) {
        (-self.alpha * self.dt, (2.0 * self.beta * self.dt).sqrt())
    }

    /// Smallest bandwidth accepted by the local time estimator.
    pub fn min_bandwidth(&self) -> f64 {
        10.0 * self.dt * (2.0 * self.beta).sqrt()
    }

    /// Expected local time at level `y` still to be accumulated by an
    /// excursion currently at height `h`: the Green function of `H` killed
    /// at 0, `(beta/alpha)(e^{alpha min(h, y)} - 1) e^{-alpha y}`.
    pub fn green(&self, h: f64, y: f64) -> f64 {
        let m = h.min(y).max(0.0);
        if self.alpha == 0.0 {
            self.beta * m
        } else {
            self.beta / self.alpha * (self.alpha * m).exp_m1() * (-self.alpha * y).exp()
        }
    }
}

/// A discretized excursion of `H`. `heights[0]` and, when `complete`, the
/// last entry are the boundary points at `offset`; every other entry lies
/// strictly above `offset`. Sub-excursions above a level keep absolute
/// heights and set `offset` to that level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub dt: f64,
    pub beta: f64,
    pub offset: f64,
    pub heights: Vec<f64>,
    /// False when the simulation stopped before the excursion returned.
    pub complete: bool,
}

impl Excursion {
    fn interior(&self) -> &[f64] {
        let n = self.heights.len();
        let end = if self.complete { n.saturating_sub(1) } else { n };
        &self.heights[1.min(end)..end]
    }

    /// Lifetime, which is also the total mass in this parametrization.
    pub fn lifetime(&self) -> f64 {
        self.heights.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn sup(&self) -> f64 {
        self.interior().iter().fold(self.offset, |a, &h| a.max(h)) - self.offset
    }

    /// First time at which the height (above `offset`) reaches `b`.
    pub fn first_passage(&self, b: f64) -> Option<f64> {
        self.heights.iter().position(|&h| h - self.offset >= b).map(|i| i as f64 * self.dt)
    }

    /// Last grid time at which the height is at least `b`.
    pub fn last_passage(&self, b: f64) -> Option<f64> {
        self.heights.iter().rposition(|&h| h - self.offset >= b).map(|i| i as f64 * self.dt)
    }

    /// Occupation density at `b`: time spent in `[b, b + eps)` over `eps`.
    pub fn local_time(&self, b: f64, eps: f64) -> Result<f64> {
        let min = 10.0 * self.dt * (2.0 * self.beta).sqrt();
        if !(eps > min) {
            return invalid(format!("bandwidth {eps} is below the resolvable minimum {min}"));
        }
        let (lo, hi) = (self.offset + b, self.offset + b + eps);
        let count = self.interior().iter().filter(|&&h| h >= lo && h < hi).count();
        Ok(count as f64 * self.dt / eps)
    }

    /// Grid points in each level bin `[k eps, (k + 1) eps)` above `offset`.
    /// Bin indices are computed from absolute heights minus the integer
    /// index of `offset`, so sub-excursions at multiples of `eps` share the
    /// bins of their parent exactly.
    pub fn level_counts(&self, eps: f64) -> Vec<u64> {
        let base = (self.offset / eps).round() as i64;
        let mut counts: Vec<u64> = Vec::new();
        for &h in self.interior() {
            let k = (h / eps).floor() as i64 - base;
            if k < 0 {
                continue;
            }
            let k = k as usize;
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        counts
    }

    /// `sup_b L^b`, estimated with bins of width `eps`.
    pub fn width(&self, eps: f64) -> f64 {
        self.level_counts(eps).into_iter().max().unwrap_or(0) as f64 * self.dt / eps
    }

    /// The excursions above level `b`, as maximal runs of grid points
    /// strictly above `offset + b`.
    pub fn sub_excursions(&self, b: f64) -> Vec<Excursion> {
        let level = self.offset + b;
        let mut out = Vec::new();
        let mut run: Option<Vec<f64>> = None;
        for &h in self.interior() {
            if h > level {
                run.get_or_insert_with(|| vec![level]).push(h);
            } else if let Some(mut r) = run.take() {
                r.push(level);
                out.push(Excursion { dt: self.dt, beta: self.beta, offset: level, heights: r, complete: true });
            }
        }
        if let Some(mut r) = run {
            let complete = self.complete;
            if complete {
                r.push(level);
            }
            out.push(Excursion { dt: self.dt, beta: self.beta, offset: level, heights: r, complete });
        }
        out
    }
}

/// Minimum over one step of a Brownian path with increment `d` and step
/// standard deviation `sd`, given a uniform `u` in (0, 1]. The bridge law
/// does not depend on the drift.
#[inline]
pub(crate) fn step_minimum(d: f64, sd: f64, u: f64) -> f64 {
    0.5 * (d - (d * d - 2.0 * sd * sd * u.ln()).sqrt())
}

/// Draws one increment of `X` and its minimum over the step.
#[inline]
pub(crate) fn draw_step(rng: &mut RngState, mean: f64, sd: f64) -> (f64, f64) {
    let z: f64 = StandardNormal.sample(rng);
    let d = mean + sd * z;
    (d, step_minimum(d, sd, rng.uniform_open0()))
}

/// The reflected process `X - I` sampled exactly at grid times, with the
/// infimum taken over the whole continuous step. Excursions are delimited by
/// the steps in which the process touches 0; an excursion is timed from the
/// start of the step in which it begins.
pub struct ExcursionStream {
    model: BrownianModel,
    rng: RngState,
    /// Current value of `X - I`.
    y: f64,
    /// The last step touched 0, so `y` opens a new excursion.
    fresh: bool,
    /// Elapsed time.
    pub time: f64,
    /// Current value of `-I`, the local time at 0.
    pub local_time_at_zero: f64,
}

/// Stop rule fed every interior point of the current excursion with the
/// number of steps so far. Its answer is honoured once the excursion has met
/// the reach condition.
pub trait StopRule {
    fn reset(&mut self) {}
    fn stop(&mut self, h: f64, steps: usize) -> bool;
}

/// Never stops early.
pub struct RunToEnd;

impl StopRule for RunToEnd {
    fn stop(&mut self, _: f64, _: usize) -> bool {
        false
    }
}

impl ExcursionStream {
    pub fn new(model: BrownianModel, rng: RngState) -> Self {
        ExcursionStream { model, rng, y: 0.0, fresh: false, time: 0.0, local_time_at_zero: 0.0 }
    }

    pub fn model(&self) -> &BrownianModel {
        &self.model
    }

    #[inline]
    fn step(&mut self, mean: f64, sd: f64) {
        let (d, m) = draw_step(&mut self.rng, mean, sd);
        if self.y + m < 0.0 {
            self.local_time_at_zero -= self.y + m;
            self.y = d - m;
            self.fresh = true;
        } else {
            self.y += d;
            self.fresh = false;
        }
        self.time += self.model.dt;
    }

    /// Steps until the current point opens a new excursion.
    fn seek_start(&mut self, mean: f64, sd: f64) {
        while !self.fresh {
            self.step(mean, sd);
        }
    }

    /// Drops the rest of the current excursion. Excursions are i.i.d. in
    /// local time, so the clock at 0 is unaffected.
    fn abandon(&mut self) {
        self.y = 0.0;
        self.fresh = false;
    }

    /// Finds the next excursion with height at least `reach` and follows it
    /// until it returns to 0, `stop` fires or `max_steps` is hit. Excursions
    /// that stay below `reach` for `max_steps` are dropped and a cut-off
    /// excursion is abandoned, so `time` no longer tracks a single path. The
    /// path is written into `buf`, which is reused across calls.
    pub fn next_reaching(&mut self, reach: f64, max_steps: usize, stop: &mut dyn StopRule, buf: &mut Vec<f64>) -> bool {
        let (mean, sd) = self.model.increment();
        let beta = self.model.beta;
        loop {
            self.seek_start(mean, sd);
            buf.clear();
            buf.push(0.0);
            let mut reached = false;
            stop.reset();
            let mut complete = false;
            loop {
                let h = self.y / beta;
                buf.push(h);
                if !reached && h >= reach {
                    reached = true;
                }
                let steps = buf.len() - 1;
                let halt = stop.stop(h, steps);
                if reached && halt {
                    break;
                }
                if steps >= max_steps {
                    break;
                }
                self.step(mean, sd);
                if self.fresh {
                    buf.push(0.0);
                    complete = true;
                    break;
                }
            }
            if !complete {
                self.abandon();
            }
            if reached {
                return complete;
            }
        }
    }

    /// Runs until the local time at 0 reaches `local_time` and returns the
    /// height maximum of every excursion completed on the way. An excursion
    /// is cut short as soon as it exceeds `cap`.
    pub fn maxima_until(&mut self, local_time: f64, cap: f64) -> Vec<f64> {
        let (mean, sd) = self.model.increment();
        let beta = self.model.beta;
        let mut out = Vec::new();
        let mut current: Option<f64> = None;
        while self.local_time_at_zero < local_time {
            self.step(mean, sd);
            if self.fresh {
                out.extend(current.take());
                if self.local_time_at_zero >= local_time {
                    break;
                }
            }
            if self.y > 0.0 {
                let m = current.map_or(0.0, |c: f64| c).max(self.y / beta);
                if m > cap {
                    out.push(m);
                    current = None;
                    self.abandon();
                } else {
                    current = Some(m);
                }
            }
        }
        out
    }

    /// Next excursion reaching `reach`, as an owned record.
    pub fn next_excursion(&mut self, reach: f64, max_steps: usize) -> Excursion {
        let mut buf = Vec::new();
        let complete = self.next_reaching(reach, max_steps, &mut RunToEnd, &mut buf);
        Excursion { dt: self.model.dt, beta: self.model.beta, offset: 0.0, heights: buf, complete }
    }
}

/// Every excursion of `H` completed within `[0, total_time]`, in order.
pub fn sample_height_excursions(model: BrownianModel, total_time: f64, rng: RngState) -> Vec<Excursion> {
    let mut s = ExcursionStream::new(model, rng);
    let (mean, sd) = model.increment();
    let mut out = Vec::new();
    let mut heights: Vec<f64> = Vec::new();
    while s.time < total_time {
        s.step(mean, sd);
        if s.fresh {
            if heights.len() > 1 {
                heights.push(0.0);
                out.push(Excursion { dt: model.dt, beta: model.beta, offset: 0.0, heights: std::mem::take(&mut heights), complete: true });
            }
            heights.clear();
            heights.push(0.0);
        }
        if !heights.is_empty() {
            heights.push(s.y / model.beta);
        }
    }
    out
}

/// One line of the excursion summary table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExcursionSummary {
    pub lifetime: f64,
    pub sup: f64,
    pub mass: f64,
    pub complete: bool,
    pub local_times: Vec<f64>,
    pub first_passages: Vec<Option<f64>>,
}

pub fn summarize(e: &Excursion, levels: &[f64], eps: f64) -> Result<ExcursionSummary> {
    Ok(ExcursionSummary {
        lifetime: e.lifetime(),
        sup: e.sup(),
        mass: e.lifetime(),
        complete: e.complete,
        local_times: levels.iter().map(|&b| e.local_time(b, eps)).collect::<Result<_>>()?,
        first_passages: levels.iter().map(|&b| e.first_passage(b)).collect(),
    })
}

/// Raw little-endian `f32` heights of `e`, one value per grid point.
pub fn write_path_f32<W: std::io::Write>(e: &Excursion, mut out: W) -> Result<()> {
    for &h in &e.heights {
        out.write_all(&(h as f32).to_le_bytes())?;
    }
    Ok(())
}

/// CSV with columns `lifetime, sup, mass, complete`, then `L_b` and `tau_b`
/// for each level.
pub fn write_summaries<W: std::io::Write>(rows: &[ExcursionSummary], levels: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["lifetime".to_string(), "sup".into(), "mass".into(), "complete".into()];
    header.extend(levels.iter().map(|b| format!("L_{b}")));
    header.extend(levels.iter().map(|b| format!("tau_{b}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.lifetime.to_string(), r.sup.to_string(), r.mass.to_string(), r.complete.to_string()];
        rec.extend(r.local_times.iter().map(|x| x.to_string()));
        rec.extend(r.first_passages.iter().map(|x| x.map(|t| t.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exc(h: &[f64]) -> Excursion {
        Excursion { dt: 0.1, beta: 1.0, offset: 0.0, heights: h.to_vec(), complete: true }
    }

    #[test]
    fn basic_functionals() {
        let e = exc(&[0.0, 0.5, 1.5, 0.7, 1.2, 0.0]);
        assert!((e.lifetime() - 0.5).abs() < 1e-15);
        assert_eq!(e.sup(), 1.5);
        assert_eq!(e.first_passage(1.0), Some(0.2));
        assert_eq!(e.last_passage(1.0), Some(0.4));
        let subs = e.sub_excursions(1.0);
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[0].heights, vec![1.0, 1.5, 1.0]);
        assert!((subs[0].sup() - 0.5).abs() < 1e-15);
        assert!(e.local_time(0.0, 0.01).is_err());
        assert_eq!(exc(&[0.0, 0.2, 0.0]).local_time(1.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn guard_rejects_coarse_steps() {
        assert!(BrownianModel::new(0.0, 1.0, 1e-2).is_err());
        assert!(BrownianModel::new(2.0, 1.0, 1e-3).is_err());
        assert!(BrownianModel::new(1.0, 1.0, 1e-4).is_ok());
    }

    #[test]
    fn excursions_are_pinned_and_positive() {
        let m = BrownianModel::new(0.0, 1.0, 1e-4).unwrap();
        let list = sample_height_excursions(m, 2.0, RngState::new(8));
        assert!(!list.is_empty());
        for e in &list {
            assert_eq!(e.heights[0], 0.0);
            assert_eq!(*e.heights.last().unwrap(), 0.0);
            assert!(e.heights[1..e.heights.len() - 1].iter().all(|&h| h > 0.0));
            assert!(e.lifetime() > 0.0 && e.sup() > 0.0);
        }
    }

    #[test]
    fn green_function_matches_its_limit() {
        let a = BrownianModel::new(1e-9, 1.0, 1e-4).unwrap();
        let z = BrownianModel::new(0.0, 1.0, 1e-4).unwrap();
        assert!((a.green(0.3, 0.5) - z.green(0.3, 0.5)).abs() < 1e-8);
        assert_eq!(z.green(0.7, 0.5), 0.5);
    }
}
