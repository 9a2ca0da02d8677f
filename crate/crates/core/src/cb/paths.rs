//! Sample paths of CB and CBI processes on a uniform time grid.

use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::mechanism::{JumpMeasure, Mechanism};
use crate::error::{invalid, Error, Result};
use crate::rng::RngState;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return invalid("time step must be positive");
        }
        Ok(TimeGrid { dt, steps })
    }

    /// Grid with step `dt` covering `[0, horizon]`.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        Self::new(dt, (horizon / dt - 1e-9).ceil().max(0.0) as usize)
    }

    /// Index of the grid point at time `t`, if `t` lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = (t / self.dt).round();
        ((i * self.dt - t).abs() <= 1e-9 * t.max(1.0) && i as usize <= self.steps).then_some(i as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    /// Mass right after the jump.
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub jumps: Vec<Jump>,
    /// Time at which the mass hit 0, when known more precisely than the grid.
    pub absorbed_at: Option<f64>,
    /// Time of killing (CBI with a positive killing rate); the path is
    /// frozen at 0 afterwards.
    pub killed_at: Option<f64>,
}

/// Exact one-step transition of the Feller diffusion
/// `dY = -alpha Y dt + sqrt(2 beta Y) dB`. The Laplace transform of the step
/// is `exp(-y a l / (1 + d l))`, realised as a Poisson(`y a / d`) number of
/// exponentials with mean `d`.
#[derive(Clone, Copy, Debug)]
pub struct FellerKernel {
    alpha: f64,
    beta: f64,
    dt: f64,
    a: f64,
    d: f64,
}

impl FellerKernel {
    pub fn new(alpha: f64, beta: f64, dt: f64) -> Result<Self> {
        if !(beta > 0.0) || !(alpha >= 0.0) || !(dt > 0.0) {
            return invalid("the Feller kernel needs beta > 0, alpha >= 0, dt > 0");
        }
        let (a, d) = if alpha == 0.0 {
            (1.0, beta * dt)
        } else {
            ((-alpha * dt).exp(), beta / alpha * -(-alpha * dt).exp_m1())
        };
        Ok(FellerKernel { alpha, beta, dt, a, d })
    }

    /// Next value and, when the step ends at 0, the time within the step at
    /// which extinction happened.
    pub fn step(&self, y: f64, rng: &mut RngState) -> (f64, Option<f64>) {
        if y <= 0.0 {
            return (0.0, None);
        }
        let mean = y * self.a / self.d;
        let n = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0);
        if n == 0.0 {
            return (0.0, Some(self.extinction_offset(y, rng)));
        }
        (Gamma::new(n, self.d).expect("positive shape").sample(rng), None)
    }

    /// Extinction time within a step given that it happened: from
    /// `P_y[zeta <= s] = exp(-y v_s(inf))`, conditioned on `zeta <= dt`.
    fn extinction_offset(&self, y: f64, rng: &mut RngState) -> f64 {
        let u = rng.uniform_open0();
        let c = y * self.a / self.d - u.ln();
        let s = if self.alpha == 0.0 {
            y / (self.beta * c)
        } else {
            (self.alpha * y / (self.beta * c)).ln_1p() / self.alpha
        };
        s.clamp(0.0, self.dt)
    }

    /// Immigration over one step for the CBI with immigration `psi'`:
    /// Laplace transform `e^{-alpha dt} (1 + d l)^{-2}`, i.e. killing with
    /// probability `1 - e^{-alpha dt}` and otherwise a Gamma(2, d) mass.
    pub fn immigration(&self, rng: &mut RngState) -> Option<f64> {
        if self.alpha > 0.0 && rng.uniform() >= self.a {
            return None;
        }
        Some(Gamma::new(2.0, self.d).expect("positive").sample(rng))
    }
}

/// Exact Feller diffusion started at `x`.
pub fn sample_feller_cb(alpha: f64, beta: f64, x: f64, grid: TimeGrid, rng: &mut RngState) -> Result<SamplePath> {
    if x < 0.0 {
        return invalid("initial mass must be nonnegative");
    }
    let kernel = FellerKernel::new(alpha, beta, grid.dt)?;
    let mut values = Vec::with_capacity(grid.steps + 1);
    values.push(x);
    let mut absorbed_at = None;
    let mut y = x;
    for i in 0..grid.steps {
        if y > 0.0 {
            let (next, ext) = kernel.step(y, rng);
            if let Some(s) = ext {
                absorbed_at = Some(i as f64 * grid.dt + s);
            }
            y = next;
        }
        values.push(y);
    }
    Ok(SamplePath { dt: grid.dt, values, jumps: Vec::new(), absorbed_at, killed_at: None })
}

fn check_euler(m: &Mechanism, grid: &TimeGrid) -> Result<()> {
    m.validate()?;
    if grid.dt * m.alpha >= 0.1 {
        return Err(Error::Invalid(format!("Euler step too coarse: dt * alpha = {} >= 0.1", grid.dt * m.alpha)));
    }
    Ok(())
}

fn euler_increment(m: &Mechanism, y: f64, dt: f64, normal: &Normal<f64>, rng: &mut RngState) -> f64 {
    let compensator = match m.pi {
        JumpMeasure::Zero => 0.0,
        JumpMeasure::Cpp { rate, jumps } => rate * jumps.mean(),
    };
    -(m.alpha + compensator) * y * dt + (2.0 * m.beta * y * dt).sqrt() * normal.sample(rng)
}

fn poisson(mean: f64, rng: &mut RngState) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
    }
}

/// Euler scheme with branching jumps: in each step a Poisson number of jumps
/// with mean `Y rate dt` (left-endpoint mass), logged with their times.
pub fn sample_jumpdiff_cb(m: &Mechanism, x: f64, grid: TimeGrid, rng: &mut RngState) -> Result<SamplePath> {
    check_euler(m, &grid)?;
    if x < 0.0 {
        return invalid("initial mass must be nonnegative");
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut values = Vec::with_capacity(grid.steps + 1);
    let mut jumps = Vec::new();
    values.push(x);
    let mut y = x;
    for i in 0..grid.steps {
        if y > 0.0 {
            let t0 = i as f64 * grid.dt;
            let mut next = y + euler_increment(m, y, grid.dt, &normal, rng);
            if let JumpMeasure::Cpp { rate, jumps: law } = m.pi {
                let n = poisson(y * rate * grid.dt, rng);
                let mut times: Vec<f64> = (0..n).map(|_| t0 + rng.uniform() * grid.dt).collect();
                times.sort_by(f64::total_cmp);
                let mut level = next.max(0.0);
                for t in times {
                    let size = law.sample(rng);
                    level += size;
                    jumps.push(Jump { time: t, size, after: level });
                    next += size;
                }
            }
            y = next.max(0.0);
        }
        values.push(y);
    }
    Ok(SamplePath { dt: grid.dt, values, jumps, absorbed_at: None, killed_at: None })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CbiScheme {
    /// Exact transitions; needs `pi = 0`.
    Exact,
    Euler,
}

/// CB process with immigration mechanism `psi'`: branching as for the CB
/// process, immigration at rate `2 beta` plus size-biased jumps at rate
/// `rate E[jump]`, and killing at rate `alpha`.
pub fn sample_cbi(m: &Mechanism, x: f64, grid: TimeGrid, scheme: CbiScheme, rng: &mut RngState) -> Result<SamplePath> {
    if x < 0.0 {
        return invalid("initial mass must be nonnegative");
    }
    let mut values = Vec::with_capacity(grid.steps + 1);
    values.push(x);
    let mut jumps = Vec::new();
    let mut killed_at = None;
    let mut y = x;
    match scheme {
        CbiScheme::Exact => {
            if !matches!(m.pi, JumpMeasure::Zero) {
                return Err(Error::Unsupported("exact CBI transitions need pi = 0".into()));
            }
            let kernel = FellerKernel::new(m.alpha, m.beta, grid.dt)?;
            for i in 0..grid.steps {
                if killed_at.is_none() {
                    let (branch, _) = kernel.step(y, rng);
                    match kernel.immigration(rng) {
                        Some(imm) => y = branch + imm,
                        None => {
                            killed_at = Some((i as f64 + 0.5) * grid.dt);
                            y = 0.0;
                        }
                    }
                }
                values.push(y);
            }
        }
        CbiScheme::Euler => {
            check_euler(m, &grid)?;
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            for i in 0..grid.steps {
                if killed_at.is_none() {
                    let t0 = i as f64 * grid.dt;
                    if m.alpha > 0.0 && rng.uniform() < -(-m.alpha * grid.dt).exp_m1() {
                        killed_at = Some(t0 + 0.5 * grid.dt);
                        y = 0.0;
                        values.push(y);
                        continue;
                    }
                    let mut next = y + euler_increment(m, y, grid.dt, &normal, rng) + 2.0 * m.beta * grid.dt;
                    if let JumpMeasure::Cpp { rate, jumps: law } = m.pi {
                        let branching = poisson(y * rate * grid.dt, rng);
                        let immigrant = poisson(rate * law.mean() * grid.dt, rng);
                        let mut level = next.max(0.0);
                        for j in 0..branching + immigrant {
                            let size = if j < branching { law.sample(rng) } else { law.sample_size_biased(rng) };
                            level += size;
                            next += size;
                            jumps.push(Jump { time: t0 + rng.uniform() * grid.dt, size, after: level });
                        }
                    }
                    y = next.max(0.0);
                }
                values.push(y);
            }
        }
    }
    Ok(SamplePath { dt: grid.dt, values, jumps, absorbed_at: None, killed_at })
}

/// Supremum, total mass, largest jump and extinction time of a path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    pub sup: f64,
    pub mass: f64,
    pub max_jump: f64,
    pub extinction_time: Option<f64>,
    /// The path was still alive at the horizon; the values are lower bounds.
    pub truncated: bool,
}

pub fn cb_functionals(path: &SamplePath) -> PathFunctionals {
    let v = &path.values;
    let dt = path.dt;
    let first_zero = v.iter().position(|&y| y <= 0.0);
    let extinction_time = match (first_zero, path.absorbed_at) {
        (None, _) => None,
        (Some(i), Some(t)) if t <= i as f64 * dt + 1e-12 => Some(t),
        (Some(i), _) => Some(i as f64 * dt),
    };
    let end = first_zero.unwrap_or(v.len().saturating_sub(1));
    let mut mass = 0.0;
    for i in 0..end {
        let step_end = (i + 1) as f64 * dt;
        mass += match (i + 1 == end && first_zero.is_some(), extinction_time) {
            (true, Some(t)) if t < step_end => 0.5 * v[i] * (t - i as f64 * dt),
            _ => 0.5 * (v[i] + v[i + 1]) * dt,
        };
    }
    let sup = v.iter().copied().chain(path.jumps.iter().map(|j| j.after)).fold(0.0, f64::max);
    let max_jump = path.jumps.iter().map(|j| j.size).fold(0.0, f64::max);
    PathFunctionals { sup, mass, max_jump, extinction_time, truncated: first_zero.is_none() && v.last().is_some_and(|&y| y > 0.0) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_functionals() {
        let path = SamplePath { dt: 1.0, values: vec![1.0, 0.5, 0.0], jumps: vec![], absorbed_at: None, killed_at: None };
        let f = cb_functionals(&path);
        assert_eq!((f.sup, f.mass, f.max_jump, f.extinction_time), (1.0, 1.0, 0.0, Some(2.0)));
        assert!(!f.truncated);
    }

    #[test]
    fn zero_start_stays_zero() {
        let mut rng = RngState::new(3);
        let grid = TimeGrid::new(0.01, 100).unwrap();
        let p = sample_feller_cb(0.0, 1.0, 0.0, grid, &mut rng).unwrap();
        assert!(p.values.iter().all(|&y| y == 0.0));
        let f = cb_functionals(&p);
        assert_eq!((f.sup, f.mass, f.max_jump, f.extinction_time), (0.0, 0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn absorbed_paths_stay_at_zero() {
        let mut rng = RngState::new(5);
        let grid = TimeGrid::new(0.05, 400).unwrap();
        let m = Mechanism::new(
            0.5,
            1.0,
            JumpMeasure::Cpp { rate: 1.0, jumps: super::super::mechanism::JumpLaw::Exp { mean: 0.5 } },
        )
        .unwrap();
        for _ in 0..50 {
            for p in [sample_feller_cb(0.5, 1.0, 1.0, grid, &mut rng).unwrap(), sample_jumpdiff_cb(&m, 1.0, grid, &mut rng).unwrap()] {
                assert!(p.values.iter().all(|&y| y >= 0.0));
                if let Some(i) = p.values.iter().position(|&y| y == 0.0) {
                    assert!(p.values[i..].iter().all(|&y| y == 0.0));
                }
            }
        }
    }

    #[test]
    fn coarse_euler_is_refused() {
        let m = Mechanism::feller(2.0, 1.0).unwrap();
        let mut rng = RngState::new(1);
        assert!(sample_jumpdiff_cb(&m, 1.0, TimeGrid::new(0.1, 10).unwrap(), &mut rng).is_err());
    }

    #[test]
    fn grid_lookup() {
        let g = TimeGrid::covering(0.01, 1.0).unwrap();
        assert_eq!(g.steps, 100);
        assert_eq!(g.index_of(1.0), Some(100));
        assert_eq!(g.index_of(0.005), None);
    }
}
