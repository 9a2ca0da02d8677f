//! Branching mechanisms `psi(l) = alpha l + beta l^2 + int (e^{-l t} - 1 + l t) pi(dt)`
//! with `pi` zero or a compound Poisson measure, and the cumulant semigroup
//! `v_t(l)` solving `dv/dt = -psi(v)`, `v_0 = l`.

use rand_distr::{Distribution, Exp, Gamma, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngState;

/// Law of a single jump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Exp { mean: f64 },
    /// Density `gamma min^gamma / t^(gamma + 1)` on `t >= min`.
    Pareto { gamma: f64, min: f64 },
}

impl JumpLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::Exp { mean } if mean > 0.0 && mean.is_finite() => Ok(()),
            JumpLaw::Pareto { gamma, min } if gamma > 1.0 && min > 0.0 && gamma.is_finite() && min.is_finite() => {
                Ok(())
            }
            JumpLaw::Exp { .. } => invalid("exponential jumps need a positive finite mean"),
            JumpLaw::Pareto { .. } => invalid("Pareto jumps need gamma > 1 (finite mean) and min > 0"),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Exp { mean } => mean,
            JumpLaw::Pareto { gamma, min } => gamma * min / (gamma - 1.0),
        }
    }

    pub fn sample(&self, rng: &mut RngState) -> f64 {
        match *self {
            JumpLaw::Exp { mean } => Exp::new(1.0 / mean).expect("validated").sample(rng),
            JumpLaw::Pareto { gamma, min } => Pareto::new(min, gamma).expect("validated").sample(rng),
        }
    }

    /// A draw from the size-biased law `t P(dt) / E[t]`.
    pub fn sample_size_biased(&self, rng: &mut RngState) -> f64 {
        match *self {
            JumpLaw::Exp { mean } => Gamma::new(2.0, mean).expect("validated").sample(rng),
            JumpLaw::Pareto { gamma, min } => Pareto::new(min, gamma - 1.0).expect("validated").sample(rng),
        }
    }

    /// `E[e^{-l t} - 1 + l t]`
    fn compensated_laplace(&self, l: f64) -> f64 {
        match *self {
            JumpLaw::Exp { mean } => {
                let x = l * mean;
                x * x / (1.0 + x)
            }
            JumpLaw::Pareto { gamma, min } => {
                // t = min / u^m with m = 1/(gamma - 1) keeps the integrand bounded.
                let m = 1.0 / (gamma - 1.0);
                let g = |s: f64| {
                    if s <= 0.0 {
                        return l * min * gamma * m;
                    }
                    let u = s.powf(m);
                    let z = l * min / u;
                    let h = (-z).exp_m1() + z;
                    h * gamma * u.powf(gamma - 1.0) * m * s.powf(m - 1.0)
                };
                quadrature::integrate(g, 0.0, 1.0, 1e-14).integral
            }
        }
    }

    /// `E[t (1 - e^{-l t})]`
    fn size_biased_complement(&self, l: f64) -> f64 {
        match *self {
            JumpLaw::Exp { mean } => mean * (1.0 - 1.0 / (1.0 + l * mean).powi(2)),
            JumpLaw::Pareto { gamma, min } => {
                let m = 1.0 / (gamma - 1.0);
                let g = |s: f64| {
                    if s <= 0.0 {
                        return min * gamma * m;
                    }
                    let u = s.powf(m);
                    let t = min / u;
                    t * -(-l * t).exp_m1() * gamma * u.powf(gamma - 1.0) * m * s.powf(m - 1.0)
                };
                quadrature::integrate(g, 0.0, 1.0, 1e-14).integral
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpMeasure {
    Zero,
    Cpp { rate: f64, jumps: JumpLaw },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanism {
    pub alpha: f64,
    pub beta: f64,
    pub pi: JumpMeasure,
}

/// Local error tolerance of the step-doubling RK4 solver.
const ODE_TOL: f64 = 1e-10;

impl Mechanism {
    pub fn new(alpha: f64, beta: f64, pi: JumpMeasure) -> Result<Self> {
        let m = Mechanism { alpha, beta, pi };
        m.validate()?;
        Ok(m)
    }

    pub fn feller(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(alpha, beta, JumpMeasure::Zero)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return invalid("alpha must be finite and nonnegative");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return invalid("beta must be finite and nonnegative");
        }
        match self.pi {
            JumpMeasure::Zero => {
                if self.beta == 0.0 && self.alpha == 0.0 {
                    return invalid("the mechanism is identically zero");
                }
            }
            JumpMeasure::Cpp { rate, jumps } => {
                if !(rate >= 0.0 && rate.is_finite()) {
                    return invalid("jump rate must be finite and nonnegative");
                }
                jumps.validate()?;
            }
        }
        Ok(())
    }

    pub fn is_critical(&self) -> bool {
        self.alpha == 0.0
    }

    /// Whether the tree has no leaves of positive mass: `beta > 0` or
    /// infinite small-jump activity. Compound Poisson measures never have the
    /// latter, so only `beta > 0` qualifies here.
    pub fn has_regular_genealogy(&self) -> bool {
        self.beta > 0.0
    }

    pub fn jump_rate(&self) -> f64 {
        match self.pi {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::Cpp { rate, .. } => rate,
        }
    }

    pub fn psi(&self, l: f64) -> f64 {
        let jumps = match self.pi {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::Cpp { rate, jumps } => rate * jumps.compensated_laplace(l),
        };
        self.alpha * l + self.beta * l * l + jumps
    }

    pub fn psi_prime(&self, l: f64) -> f64 {
        let jumps = match self.pi {
            JumpMeasure::Zero => 0.0,
            JumpMeasure::Cpp { rate, jumps } => rate * jumps.size_biased_complement(l),
        };
        self.alpha + 2.0 * self.beta * l + jumps
    }

    /// `(psi(p) - psi(q)) / (p - q) - alpha`, the Laplace exponent of the
    /// subordinators along the spine.
    pub fn spine_exponent(&self, p: f64, q: f64) -> f64 {
        if p == q {
            return self.psi_prime(p) - self.alpha;
        }
        (self.psi(p) - self.psi(q)) / (p - q) - self.alpha
    }

    /// Root of `psi(u) = l` for `l >= 0`.
    pub fn psi_inverse(&self, l: f64) -> Result<f64> {
        if l <= 0.0 {
            return Ok(0.0);
        }
        if let JumpMeasure::Zero = self.pi {
            if self.beta > 0.0 {
                let a = self.alpha;
                return Ok((-a + (a * a + 4.0 * self.beta * l).sqrt()) / (2.0 * self.beta));
            }
            return Ok(l / self.alpha);
        }
        let mut hi = 1.0;
        while self.psi(hi) < l {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NoConvergence("psi does not reach the target".into()));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.psi(mid) < l {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    fn closed_form(&self) -> bool {
        matches!(self.pi, JumpMeasure::Zero)
    }

    /// `v_t(l)`
    pub fn v(&self, l: f64, t: f64) -> f64 {
        self.v_and_derivative(l, t).0
    }

    /// `(v_t(l), dv_t/dl)`. Closed form without jumps, otherwise an adaptive
    /// RK4 solution of `v' = -psi(v)`, `w' = -psi'(v) w`.
    pub fn v_and_derivative(&self, l: f64, t: f64) -> (f64, f64) {
        if l == 0.0 && self.closed_form() {
            return (0.0, (-self.alpha * t).exp());
        }
        if self.closed_form() {
            let (a, b) = (self.alpha, self.beta);
            if a == 0.0 {
                let den = 1.0 + b * l * t;
                return (l / den, 1.0 / (den * den));
            }
            let e = (-a * t).exp();
            let one_minus = -(-a * t).exp_m1();
            let den = a + b * l * one_minus;
            return (a * l * e / den, a * a * e / (den * den));
        }
        self.integrate(l, t)
    }

    fn integrate(&self, l: f64, t: f64) -> (f64, f64) {
        let rhs = |y: [f64; 2]| [-self.psi(y[0]), -self.psi_prime(y[0]) * y[1]];
        let rk4 = |y: [f64; 2], h: f64| {
            let k1 = rhs(y);
            let k2 = rhs([y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([y[0] + h * k3[0], y[1] + h * k3[1]]);
            [
                y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ]
        };
        let mut y = [l, 1.0];
        let mut s = 0.0;
        let mut h = (t / 64.0).min(0.1 / (1.0 + self.psi_prime(l)));
        while s < t {
            h = h.min(t - s);
            let full = rk4(y, h);
            let half = rk4(rk4(y, 0.5 * h), 0.5 * h);
            let err = (full[0] - half[0]).abs().max((full[1] - half[1]).abs());
            let scale = 1.0 + half[0].abs().max(half[1].abs());
            if err <= ODE_TOL * scale || h < 1e-12 {
                s += h;
                y = [half[0].max(0.0), half[1]];
                if err < ODE_TOL * scale / 32.0 {
                    h *= 2.0;
                }
            } else {
                h *= 0.5;
            }
        }
        (y[0], y[1])
    }

    /// `lim_{l -> inf} v_t(l)`, so that `P_x[Y_t = 0] = exp(-x v_t(inf))`.
    /// Infinite when the process cannot reach 0 in finite time.
    pub fn v_infinity(&self, t: f64) -> f64 {
        match self.pi {
            JumpMeasure::Zero if self.beta > 0.0 => {
                if self.alpha == 0.0 {
                    1.0 / (self.beta * t)
                } else {
                    self.alpha / (self.beta * (self.alpha * t).exp_m1())
                }
            }
            _ => f64::INFINITY,
        }
    }

    /// Scale function with Laplace transform `1/psi`, closed form without jumps.
    pub fn scale_function(&self, r: f64) -> Result<f64> {
        if !self.closed_form() || self.beta <= 0.0 {
            return Err(Error::Unsupported("scale functions are implemented for pi = 0 and beta > 0".into()));
        }
        if r < 0.0 {
            return Ok(0.0);
        }
        Ok(if self.alpha == 0.0 {
            r / self.beta
        } else {
            -(-(self.alpha / self.beta) * r).exp_m1() / self.alpha
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn closed_form_values() {
        let m = Mechanism::feller(0.0, 1.0).unwrap();
        assert!(close(m.v(1.0, 1.0), 0.5, 1e-15));
        let m = Mechanism::feller(1.0, 1.0).unwrap();
        assert!(close(m.v(1.0, 2f64.ln()), 1.0 / 3.0, 1e-15));
        assert_eq!(m.v(0.0, 3.0), 0.0);
    }

    #[test]
    fn ode_agrees_with_closed_form() {
        // A jump measure with zero rate leaves psi unchanged but forces the ODE path.
        let jumps = JumpLaw::Exp { mean: 1.0 };
        let m = Mechanism::new(0.5, 1.0, JumpMeasure::Cpp { rate: 0.0, jumps }).unwrap();
        let f = Mechanism::feller(0.5, 1.0).unwrap();
        for &(l, t) in &[(1.0, 1.0), (3.0, 0.2), (0.1, 5.0)] {
            let (v, w) = m.v_and_derivative(l, t);
            let (v0, w0) = f.v_and_derivative(l, t);
            assert!(close(v, v0, 1e-9), "{v} vs {v0}");
            assert!(close(w, w0, 1e-9), "{w} vs {w0}");
        }
    }

    #[test]
    fn jump_laplace_terms_match_direct_quadrature() {
        let law = JumpLaw::Pareto { gamma: 2.5, min: 0.5 };
        let (gamma, min, l) = (2.5f64, 0.5f64, 1.3f64);
        let dens = |t: f64| gamma * min.powf(gamma) / t.powf(gamma + 1.0);
        // Direct integration over t in [min, inf) after t = min / s.
        let direct = quadrature::integrate(
            |s: f64| {
                if s <= 0.0 {
                    return 0.0;
                }
                let t = min / s;
                ((-l * t).exp() - 1.0 + l * t) * dens(t) * min / (s * s)
            },
            0.0,
            1.0,
            1e-13,
        )
        .integral;
        assert!(close(law.compensated_laplace(l), direct, 1e-9));
        let e = JumpLaw::Exp { mean: 2.0 };
        assert!(close(e.compensated_laplace(0.0), 0.0, 1e-15));
        assert!(close(e.size_biased_complement(1e9), 2.0, 1e-8));
    }

    #[test]
    fn psi_inverse_roundtrip() {
        let m = Mechanism::new(0.2, 0.7, JumpMeasure::Cpp { rate: 1.5, jumps: JumpLaw::Exp { mean: 0.3 } }).unwrap();
        let u = m.psi_inverse(2.0).unwrap();
        assert!(close(m.psi(u), 2.0, 1e-10));
        let b = Mechanism::feller(0.0, 2.0).unwrap();
        assert!(close(b.psi_inverse(8.0).unwrap(), 2.0, 1e-14));
    }

    #[test]
    fn mechanism_json() {
        let m: Mechanism = serde_json::from_str(
            r#"{"alpha":0.5,"beta":1,"pi":{"kind":"cpp","rate":2,"jumps":{"kind":"pareto","gamma":2.5,"min":1}}}"#,
        )
        .unwrap();
        assert_eq!(m.jump_rate(), 2.0);
        assert!(serde_json::from_str::<Mechanism>(r#"{"alpha":0,"beta":1,"pi":{"kind":"zero"},"x":1}"#).is_err());
        assert!(m.validate().is_ok());
    }
}
