use branchlab::cb::{
    cb_functionals, excursion_mass_laplace_quadrature, lccb_limit, sample_cbi, sample_feller_cb, sample_jumpdiff_cb,
    scale_ratio_report, CbiScheme, JumpLaw, JumpMeasure, Mechanism, TimeGrid,
};
use branchlab::par::draw_batch;
use branchlab::rng::RngState;
use branchlab::stats::{Estimate, Moments};

fn mean_of(xs: impl IntoIterator<Item = f64>) -> Estimate {
    let m: Moments = xs.into_iter().collect();
    Estimate { value: m.mean, se: m.se() }
}

#[test]
fn feller_extinction_and_laplace_at_time_one() {
    let grid = TimeGrid::new(1.0, 1).unwrap();
    let ends = draw_batch(100_000, 2, &RngState::new(1), |r| sample_feller_cb(0.0, 1.0, 1.0, grid, r).unwrap().values[1]);
    let zero = ends.iter().filter(|&&y| y == 0.0).count() as u64;
    assert!(Estimate::proportion(zero, 100_000).within((-1f64).exp(), 0.0));
    assert!(mean_of(ends.iter().map(|y| (-y).exp())).within((-0.5f64).exp(), 0.0));
}

#[test]
fn riccati_closed_forms() {
    let critical = Mechanism::feller(0.0, 1.0).unwrap();
    assert!((critical.v(1.0, 1.0) - 0.5).abs() < 1e-12);
    let sub = Mechanism::feller(1.0, 1.0).unwrap();
    assert!((sub.v(1.0, 2f64.ln()) - 1.0 / 3.0).abs() < 1e-12);
    assert!((lccb_limit(&critical, 1.0, 1.0, 1.0) - 0.25 * (-0.5f64).exp()).abs() < 1e-12);
}

#[test]
fn branching_property_in_the_initial_mass() {
    let m = Mechanism::feller(0.5, 1.0).unwrap();
    let grid = TimeGrid::new(0.5, 2).unwrap();
    let ends = draw_batch(100_000, 2, &RngState::new(2), |r| sample_feller_cb(0.5, 1.0, 2.0, grid, r).unwrap().values[2]);
    // E_2[e^{-Y}] = (E_1[e^{-Y}])^2 = e^{-2 v_1(1)}
    assert!(mean_of(ends.iter().map(|y| (-y).exp())).within((-2.0 * m.v(1.0, 1.0)).exp(), 0.0));
}

#[test]
fn supremum_tail_bound() {
    let grid = TimeGrid::new(1e-2, 20_000).unwrap();
    let sups = draw_batch(20_000, 2, &RngState::new(3), |r| cb_functionals(&sample_feller_cb(0.0, 1.0, 1.0, grid, r).unwrap()).sup);
    for level in [2.0, 4.0] {
        let hits = sups.iter().filter(|&&s| s > level).count() as u64;
        let e = Estimate::proportion(hits, 20_000);
        assert!(e.value <= 1.0 / level + 4.0 * e.se, "level {level}: {e:?}");
    }
}

#[test]
fn jump_diffusion_mean_decays() {
    let m = Mechanism::new(0.5, 1.0, JumpMeasure::Cpp { rate: 2.0, jumps: JumpLaw::Exp { mean: 0.3 } }).unwrap();
    let dt = 1e-3;
    let grid = TimeGrid::new(dt, 1_000).unwrap();
    let ends = draw_batch(20_000, 2, &RngState::new(4), |r| sample_jumpdiff_cb(&m, 1.0, grid, r).unwrap().values[1_000]);
    let band = 2.0 * dt;
    assert!(mean_of(ends).within((-0.5f64).exp(), band));
}

#[test]
fn immigration_laplace_and_positivity() {
    let m = Mechanism::feller(0.0, 1.0).unwrap();
    let grid = TimeGrid::new(0.25, 4).unwrap();
    let ends = draw_batch(100_000, 2, &RngState::new(5), |r| sample_cbi(&m, 1.0, grid, CbiScheme::Exact, r).unwrap().values[4]);
    assert!(ends.iter().all(|&y| y > 0.0));
    let target = 0.25 * (-0.5f64).exp();
    assert!(mean_of(ends.iter().map(|y| (-y).exp())).within(target, 0.0));
}

#[test]
fn euler_immigration_tracks_the_exact_scheme() {
    let m = Mechanism::feller(0.0, 1.0).unwrap();
    let dt = 1e-3;
    let grid = TimeGrid::new(dt, 1_000).unwrap();
    let ends = draw_batch(20_000, 2, &RngState::new(6), |r| sample_cbi(&m, 1.0, grid, CbiScheme::Euler, r).unwrap().values[1_000]);
    let target = 0.25 * (-0.5f64).exp();
    assert!(mean_of(ends.iter().map(|y| (-y).exp())).within(target, 2.0 * dt));
}

#[test]
fn scale_ratios_and_mass_laplace() {
    for row in scale_ratio_report(&Mechanism::feller(0.0, 2.0).unwrap(), &[0.5, 2.0], &[3.0, 50.0]).unwrap() {
        assert!((row.ratio - row.x).abs() < 1e-12);
    }
    let sub = scale_ratio_report(&Mechanism::feller(1.0, 1.0).unwrap(), &[2.0], &[3.0, 30.0]).unwrap();
    let expected = 1f64.exp_m1().recip() * 2f64.exp_m1();
    assert!(sub.iter().all(|r| (r.ratio - expected).abs() < 1e-12));
    assert!((sub[0].ratio - 2.0).abs() > 1.0);
    for l in [0.1, 1.0, 5.0] {
        assert!((excursion_mass_laplace_quadrature(1.0, l) - l.sqrt()).abs() < 1e-6);
    }
}
