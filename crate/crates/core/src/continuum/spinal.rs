//! Left and right height processes seen from a point on the spine. In the
//! Brownian case the spine contribution is `-I_t / beta`, so the left path
//! is `(X_t - 2 I_t) / beta`. The infimum is exact over each step. The condensation variant caps the spine
//! contribution at an exponential level with rate `alpha`.

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::excursion::{draw_step, BrownianModel};
use crate::rng::RngState;

/// One side of a spinal decomposition, sampled on the model grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SidePath {
    /// The driving process `X` (drifted Brownian motion from 0).
    pub driver: Vec<f64>,
    /// Running infimum of `driver`.
    pub infimum: Vec<f64>,
    /// Spine contribution, possibly capped.
    pub spine: Vec<f64>,
    /// Full height: reflected part plus spine contribution.
    pub heights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinalHeights {
    pub dt: f64,
    pub left: SidePath,
    pub right: SidePath,
    /// Spine cap; infinite for the immortal tree.
    pub cap: f64,
}

const LEFT: u64 = 0;
const RIGHT: u64 = 1;
const CAP: u64 = u64::MAX;

fn side(model: &BrownianModel, steps: usize, cap: f64, mut rng: RngState) -> SidePath {
    let (mean, sd) = model.increment();
    let beta = model.beta;
    let mut p = SidePath {
        driver: Vec::with_capacity(steps + 1),
        infimum: Vec::with_capacity(steps + 1),
        spine: Vec::with_capacity(steps + 1),
        heights: Vec::with_capacity(steps + 1),
    };
    let (mut x, mut inf) = (0.0f64, 0.0f64);
    for i in 0..=steps {
        if i > 0 {
            let (d, m) = draw_step(&mut rng, mean, sd);
            inf = inf.min(x + m);
            x += d;
        }
        let spine = (-inf / beta).min(cap);
        p.driver.push(x);
        p.infimum.push(inf);
        p.spine.push(spine);
        p.heights.push((x - inf) / beta + spine);
    }
    p
}

fn spinal(model: &BrownianModel, horizon: f64, cap: f64, rng: &RngState) -> SpinalHeights {
    let steps = (horizon / model.dt).round() as usize;
    SpinalHeights {
        dt: model.dt,
        left: side(model, steps, cap, rng.split(LEFT)),
        right: side(model, steps, cap, rng.split(RIGHT)),
        cap,
    }
}

/// Left and right height processes of the immortal tree over `[0, horizon]`.
pub fn immortal_heights(model: &BrownianModel, horizon: f64, rng: &RngState) -> SpinalHeights {
    spinal(model, horizon, f64::INFINITY, rng)
}

/// Draws the condensation cap, or `+inf` when `alpha == 0`.
pub fn condensation_cap(alpha: f64, rng: &RngState) -> f64 {
    if alpha > 0.0 {
        let mut r = rng.split(CAP);
        Exp::new(alpha).expect("positive rate").sample(&mut r)
    } else {
        f64::INFINITY
    }
}

/// Same driving paths as [`immortal_heights`] under the same `rng`, with the
/// spine contribution capped at an `Exp(alpha)` level drawn once per path.
pub fn condensation_heights(model: &BrownianModel, horizon: f64, rng: &RngState) -> SpinalHeights {
    spinal(model, horizon, condensation_cap(model.alpha, rng), rng)
}

/// Statistics of the left immortal path up to its first passage at `level`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageStats {
    pub first_passage: f64,
    /// Time spent strictly below `level / 2` before the first passage.
    pub occupation_below_half: f64,
}

/// Streams the left immortal path until it reaches `level`. Returns `None`
/// if that takes more than `max_steps`.
pub fn immortal_first_passage(model: &BrownianModel, level: f64, max_steps: usize, rng: &RngState) -> Option<PassageStats> {
    passage_from(model, level, max_steps, &mut rng.split(LEFT))
}

/// As [`immortal_first_passage`], drawing directly from `r`.
pub fn passage_from(model: &BrownianModel, level: f64, max_steps: usize, r: &mut RngState) -> Option<PassageStats> {
    let (mean, sd) = model.increment();
    let (mut x, mut inf) = (0.0f64, 0.0f64);
    let mut below = 0u64;
    for i in 1..=max_steps {
        let (d, m) = draw_step(r, mean, sd);
        inf = inf.min(x + m);
        x += d;
        let h = (x - inf) / model.beta + (-inf / model.beta);
        if h >= level {
            return Some(PassageStats {
                first_passage: i as f64 * model.dt,
                occupation_below_half: below as f64 * model.dt,
            });
        }
        if h < 0.5 * level {
            below += 1;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn left_dominates_reflected_height_and_spine_grows() {
        let m = BrownianModel::new(0.5, 1.0, 1e-4).unwrap();
        let s = immortal_heights(&m, 1.0, &RngState::new(3));
        assert_eq!(s.left.heights[0], 0.0);
        assert_eq!(s.right.heights[0], 0.0);
        for side in [&s.left, &s.right] {
            for i in 0..side.heights.len() {
                let reflected = (side.driver[i] - side.infimum[i]) / m.beta;
                assert!(side.heights[i] >= reflected);
                if i > 0 {
                    assert!(side.spine[i] >= side.spine[i - 1]);
                }
            }
        }
        assert_ne!(s.left.driver[10], s.right.driver[10]);
    }

    #[test]
    fn critical_condensation_equals_immortal() {
        let m = BrownianModel::new(0.0, 1.0, 1e-4).unwrap();
        let rng = RngState::new(11);
        assert_eq!(immortal_heights(&m, 0.5, &rng), condensation_heights(&m, 0.5, &rng));
    }

    #[test]
    fn cap_bounds_the_spine() {
        let m = BrownianModel::new(1.0, 1.0, 1e-4).unwrap();
        let rng = RngState::new(5);
        let im = immortal_heights(&m, 2.0, &rng);
        let cd = condensation_heights(&m, 2.0, &rng);
        assert!(cd.cap.is_finite());
        assert_eq!(im.left.driver, cd.left.driver);
        for (a, b) in im.left.heights.iter().zip(&cd.left.heights) {
            assert!(b <= a);
        }
        assert!(cd.left.spine.iter().all(|&s| s <= cd.cap));
    }

    #[test]
    fn streaming_passage_matches_full_path() {
        let m = BrownianModel::new(0.0, 1.0, 1e-4).unwrap();
        let rng = RngState::new(21);
        let s = immortal_heights(&m, 5.0, &rng);
        let idx = s.left.heights.iter().position(|&h| h >= 0.5).unwrap();
        let p = immortal_first_passage(&m, 0.5, 1_000_000, &rng).unwrap();
        assert!((p.first_passage - idx as f64 * m.dt).abs() < 1e-12);
    }
}
