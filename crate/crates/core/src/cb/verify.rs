//! Monte Carlo and closed-form checks for CB processes: conditioning on a
//! large functional, scale-function ratios and total-mass tail ratios.

use rand_distr::{Distribution, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::mechanism::{JumpMeasure, Mechanism};
use super::paths::{cb_functionals, sample_jumpdiff_cb, FellerKernel, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::par::{draw_batch, rejection_batch};
use crate::rng::RngState;
use crate::stats::{Estimate, Moments};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFunctional {
    #[serde(alias = "w")]
    Sup,
    #[serde(alias = "sigma")]
    Mass,
    #[serde(alias = "m")]
    MaxJump,
}

impl PathFunctional {
    pub fn name(&self) -> &'static str {
        match self {
            PathFunctional::Sup => "sup",
            PathFunctional::Mass => "mass",
            PathFunctional::MaxJump => "max_jump",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CbRunOptions {
    pub dt: f64,
    /// Horizon for Euler paths; the exact Feller route needs none.
    pub horizon: f64,
    pub max_attempts: u64,
    #[serde(skip)]
    pub workers: usize,
}

impl Default for CbRunOptions {
    fn default() -> Self {
        CbRunOptions { dt: 1e-2, horizon: 200.0, max_attempts: 200_000_000, workers: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LccbRow {
    pub r: f64,
    pub lambda: f64,
    pub lhs: Option<Estimate>,
    pub rhs: f64,
    pub accepted: u64,
    pub attempts: u64,
    /// Accepted paths still alive at the horizon.
    pub truncated: u64,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LccbReport {
    pub mechanism: Mechanism,
    pub x: f64,
    pub b: f64,
    pub functional: PathFunctional,
    pub route: String,
    pub rows: Vec<LccbRow>,
    /// Levels `r` at which the attempt budget ran out.
    pub exhausted: Vec<f64>,
}

impl LccbReport {
    pub fn row(&self, r: f64, lambda: f64) -> Option<&LccbRow> {
        self.rows.iter().find(|row| row.r == r && row.lambda == lambda)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "lambda", "lhs", "lhs_se", "rhs", "accepted", "attempts", "truncated", "note"])?;
        for row in &self.rows {
            let (v, se) = row.lhs.map(|e| (format!("{:e}", e.value), format!("{:e}", e.se))).unwrap_or_default();
            w.write_record([
                row.r.to_string(),
                row.lambda.to_string(),
                v,
                se,
                format!("{:e}", row.rhs),
                row.accepted.to_string(),
                row.attempts.to_string(),
                row.truncated.to_string(),
                row.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Value of the functional and `Y_b` for one path.
#[derive(Clone, Copy, Debug)]
struct Draw {
    value: f64,
    y_b: f64,
    truncated: bool,
}

/// Exact Feller path on `[0, b]` followed by an exact draw of the remaining
/// supremum or mass given `Y_b`. Only the part before `b` uses the grid.
fn feller_draw(m: &Mechanism, kernel: &FellerKernel, x: f64, steps: usize, dt: f64, f: PathFunctional, rng: &mut RngState) -> Draw {
    let (alpha, beta) = (m.alpha, m.beta);
    let mut y = x;
    let mut sup = x;
    let mut mass = 0.0;
    for _ in 0..steps {
        if y <= 0.0 {
            break;
        }
        let (next, ext) = kernel.step(y, rng);
        mass += match ext {
            Some(s) => 0.5 * y * s,
            None => 0.5 * (y + next) * dt,
        };
        sup = sup.max(next);
        y = next;
    }
    let value = match f {
        PathFunctional::MaxJump => 0.0,
        _ if y <= 0.0 => match f {
            PathFunctional::Sup => sup,
            _ => mass,
        },
        PathFunctional::Sup => {
            // P_y[sup > r] = s(y) / s(r) with scale s(y) = (beta/alpha)(e^{alpha y / beta} - 1).
            let u = rng.uniform_open0();
            let after = if alpha == 0.0 {
                y / u
            } else {
                let k = alpha / beta;
                ((k * y).exp_m1() / u).ln_1p() / k
            };
            sup.max(after)
        }
        PathFunctional::Mass => {
            // The remaining mass is the hitting time of 0 by y - alpha t + sqrt(2 beta) B.
            let rest = if alpha == 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                y * y / (2.0 * beta * z * z)
            } else {
                InverseGaussian::new(y / alpha, y * y / (2.0 * beta)).expect("positive").sample(rng)
            };
            mass + rest
        }
    };
    Draw { value, y_b: y, truncated: false }
}

fn euler_draw(m: &Mechanism, x: f64, grid: TimeGrid, b_index: usize, f: PathFunctional, rng: &mut RngState) -> Result<Draw> {
    let path = sample_jumpdiff_cb(m, x, grid, rng)?;
    let fx = cb_functionals(&path);
    let value = match f {
        PathFunctional::Sup => fx.sup,
        PathFunctional::Mass => fx.mass,
        PathFunctional::MaxJump => fx.max_jump,
    };
    Ok(Draw { value, y_b: path.values[b_index], truncated: fx.truncated })
}

/// `(1/x) E_x[Y_b e^{-l Y_b}] = v_b'(l) e^{-x v_b(l)}`
pub fn lccb_limit(m: &Mechanism, x: f64, b: f64, lambda: f64) -> f64 {
    let (v, dv) = m.v_and_derivative(lambda, b);
    dv * (-x * v).exp()
}

/// Estimates `E_x[e^{-l Y_b} | A > r]` by rejection for each `r` and `l`,
/// next to the size-biased limit `(1/x) E_x[Y_b e^{-l Y_b}]`.
pub fn verify_lccb(
    m: &Mechanism,
    x: f64,
    b: f64,
    r_grid: &[f64],
    f: PathFunctional,
    lambdas: &[f64],
    reps: u64,
    opts: &CbRunOptions,
    rng: &RngState,
) -> Result<LccbReport> {
    m.validate()?;
    if !(x > 0.0) || !(b > 0.0) {
        return invalid("x and b must be positive");
    }
    if !m.is_critical() {
        return invalid("the conditioning limit is checked for critical mechanisms");
    }
    if !m.has_regular_genealogy() {
        return invalid("the mechanism needs beta > 0");
    }
    let exact = matches!(m.pi, JumpMeasure::Zero);
    let steps = (b / opts.dt).round() as usize;
    if ((steps as f64) * opts.dt - b).abs() > 1e-9 * b {
        return invalid("b must be a multiple of dt");
    }
    let mut report = LccbReport {
        mechanism: *m,
        x,
        b,
        functional: f,
        route: if exact { "feller_exact" } else { "euler" }.to_string(),
        rows: Vec::new(),
        exhausted: Vec::new(),
    };
    let kernel = if exact { Some(FellerKernel::new(m.alpha, m.beta, opts.dt)?) } else { None };
    let grid = TimeGrid::covering(opts.dt, opts.horizon.max(b))?;
    for (i, &r) in r_grid.iter().enumerate() {
        let stream = rng.split(i as u64);
        let impossible = exact && f == PathFunctional::MaxJump;
        let result = if impossible {
            Err(Error::Budget("a continuous path has no jumps".into()))
        } else {
            rejection_batch(reps, opts.max_attempts, opts.workers, &stream, |r_| {
                let d = match &kernel {
                    Some(k) => feller_draw(m, k, x, steps, opts.dt, f, r_),
                    None => euler_draw(m, x, grid, steps, f, r_).ok()?,
                };
                (d.value > r).then_some(d)
            })
        };
        match result {
            Ok((draws, attempts)) => {
                let truncated = draws.iter().filter(|d| d.truncated).count() as u64;
                for &lambda in lambdas {
                    let mom: Moments = draws.iter().map(|d| (-lambda * d.y_b).exp()).collect();
                    report.rows.push(LccbRow {
                        r,
                        lambda,
                        lhs: Some(Estimate { value: mom.mean, se: mom.se() }),
                        rhs: lccb_limit(m, x, b, lambda),
                        accepted: draws.len() as u64,
                        attempts,
                        truncated,
                        note: String::new(),
                    });
                }
            }
            Err(Error::Budget(msg)) => {
                report.exhausted.push(r);
                for &lambda in lambdas {
                    report.rows.push(LccbRow {
                        r,
                        lambda,
                        lhs: None,
                        rhs: lccb_limit(m, x, b, lambda),
                        accepted: 0,
                        attempts: opts.max_attempts,
                        truncated: 0,
                        note: format!("budget exhausted: {msg}"),
                    });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleRow {
    pub x: f64,
    pub r: f64,
    pub ratio: f64,
    /// `x` for critical mechanisms, `(e^{k x} - 1)/(e^k - 1)` with `k = alpha/beta` otherwise.
    pub expected: f64,
}

/// `W(r) - W(r - x)` from differences of the closed-form scale function.
fn scale_increment(m: &Mechanism, r: f64, x: f64) -> Result<f64> {
    if m.alpha == 0.0 {
        return Ok(m.scale_function(r)? - m.scale_function(r - x)?);
    }
    // W(r) = (1 - e^{-k r}) / alpha; subtract the exponentials, not W itself.
    let k = m.alpha / m.beta;
    Ok(((-k * (r - x).max(0.0)).exp() - (-k * r).exp()) / m.alpha)
}

/// Table of `(W(r) - W(r - x)) / (W(r) - W(r - 1))` for `r > x`.
pub fn scale_ratio_report(m: &Mechanism, x_grid: &[f64], r_grid: &[f64]) -> Result<Vec<ScaleRow>> {
    m.scale_function(0.0)?;
    let mut out = Vec::new();
    for &x in x_grid {
        for &r in r_grid {
            if r <= x.max(1.0) {
                continue;
            }
            let ratio = scale_increment(m, r, x)? / scale_increment(m, r, 1.0)?;
            let expected = if m.alpha == 0.0 {
                x
            } else {
                let k = m.alpha / m.beta;
                (k * x).exp_m1() / k.exp_m1()
            };
            out.push(ScaleRow { x, r, ratio, expected });
        }
    }
    Ok(out)
}

/// `N[sigma > r] = (pi beta r)^{-1/2}` for the critical Feller mechanism.
pub fn excursion_mass_tail(beta: f64, r: f64) -> f64 {
    1.0 / (std::f64::consts::PI * beta * r).sqrt()
}

/// `P_x[sigma > r] = erf(x / (2 sqrt(beta r)))`
pub fn mass_tail(beta: f64, x: f64, r: f64) -> f64 {
    erf(x / (2.0 * (beta * r).sqrt()))
}

/// `int (1 - e^{-l r}) N[sigma in dr]` by quadrature of the density
/// `r^{-3/2} / (2 sqrt(pi beta))`; should equal `sqrt(l / beta)`.
pub fn excursion_mass_laplace_quadrature(beta: f64, lambda: f64) -> f64 {
    // r = s^2 and s = t / (1 - t) map (0, inf) to (0, 1) with a bounded integrand.
    let g = |t: f64| {
        if t <= 0.0 {
            return lambda;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let s = t / (1.0 - t);
        -(-lambda * s * s).exp_m1() / (t * t)
    };
    quadrature::integrate(g, 0.0, 1.0, 1e-13).integral / (std::f64::consts::PI * beta).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub lambda: f64,
    pub quadrature: f64,
    pub target: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaRow {
    pub x: f64,
    pub r: f64,
    /// Monte Carlo `P_x[sigma > r]`.
    pub tail: Estimate,
    pub tail_exact: f64,
    pub excursion_tail: f64,
    /// `P_x[sigma > r] / N[sigma > r]`, limit `x`.
    pub ratio: Estimate,
    pub shift: f64,
    /// `P_x[sigma > r - shift] / P_x[sigma > r]`, limit 1.
    pub shift_ratio: Estimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaReport {
    pub beta: f64,
    pub reps: u64,
    pub laplace: Vec<LaplaceCheck>,
    pub rows: Vec<SigmaRow>,
}

/// Tail ratios of the total mass for the critical Feller mechanism. Under
/// `P_x` the total mass is the hitting time of 0 by `x + sqrt(2 beta) B`,
/// which is sampled exactly as `x^2 / (2 beta Z^2)`.
pub fn sigma_tail_checks(
    m: &Mechanism,
    r_grid: &[f64],
    x_grid: &[f64],
    shift: f64,
    lambdas: &[f64],
    reps: u64,
    workers: usize,
    rng: &RngState,
) -> Result<SigmaReport> {
    if !(m.is_critical() && matches!(m.pi, JumpMeasure::Zero) && m.beta > 0.0) {
        return invalid("total-mass tail checks need a critical mechanism without jumps");
    }
    let beta = m.beta;
    let laplace = lambdas
        .iter()
        .map(|&l| LaplaceCheck { lambda: l, quadrature: excursion_mass_laplace_quadrature(beta, l), target: (l / beta).sqrt() })
        .collect();
    let mut rows = Vec::new();
    for (i, &x) in x_grid.iter().enumerate() {
        let masses = draw_batch(reps, workers, &rng.split(i as u64), |r| {
            let z: f64 = StandardNormal.sample(r);
            x * x / (2.0 * beta * z * z)
        });
        for &r in r_grid {
            let above = masses.iter().filter(|&&s| s > r).count() as u64;
            let between = masses.iter().filter(|&&s| s > r - shift && s <= r).count() as u64;
            let tail = Estimate::proportion(above, reps);
            let n_tail = excursion_mass_tail(beta, r);
            let ratio = Estimate { value: tail.value / n_tail, se: tail.se / n_tail };
            let shift_ratio = if above == 0 {
                Estimate { value: f64::NAN, se: f64::INFINITY }
            } else {
                let q = between as f64 / above as f64;
                let se = if between == 0 { 0.0 } else { q * (1.0 / between as f64 + 1.0 / above as f64).sqrt() };
                Estimate { value: 1.0 + q, se }
            };
            rows.push(SigmaRow { x, r, tail, tail_exact: mass_tail(beta, x, r), excursion_tail: n_tail, ratio, shift, shift_ratio });
        }
    }
    Ok(SigmaReport { beta, reps, laplace, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_closed_forms() {
        let m = Mechanism::feller(0.0, 1.0).unwrap();
        assert!((lccb_limit(&m, 1.0, 1.0, 1.0) - 0.25 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(lccb_limit(&m, 1.0, 1.0, 0.0), 1.0);
    }

    #[test]
    fn scale_ratios() {
        let crit = Mechanism::feller(0.0, 2.0).unwrap();
        for row in scale_ratio_report(&crit, &[0.5, 1.0, 3.0], &[4.0, 10.0, 100.0]).unwrap() {
            assert!((row.ratio - row.x).abs() <= 1e-15 * row.x.max(1.0));
        }
        let sub = Mechanism::feller(1.0, 1.0).unwrap();
        for row in scale_ratio_report(&sub, &[0.5, 2.0], &[3.0, 10.0, 40.0]).unwrap() {
            assert!((row.ratio - row.expected).abs() < 1e-12, "{row:?}");
        }
    }

    #[test]
    fn excursion_mass_laplace_identity() {
        for &l in &[0.1, 1.0, 7.0] {
            assert!((excursion_mass_laplace_quadrature(1.0, l) - l.sqrt()).abs() < 1e-6);
            assert!((excursion_mass_laplace_quadrature(2.0, l) - (l / 2.0).sqrt()).abs() < 1e-6);
        }
    }
}
