use branchlab::continuum::{
    condensation_cap, condensation_heights, immortal_heights, immortal_passages, local_time_profile,
    sample_height_excursions, sup_tail_ratio, BrownianModel, DeltaBand, Excursion, ExcursionStream, SurveyOptions,
};
use branchlab::rng::RngState;
use branchlab::stats::{ks_one_sample, ks_p_value, Estimate, Moments};
use proptest::prelude::*;

fn critical(dt: f64) -> BrownianModel {
    BrownianModel::new(0.0, 1.0, dt).unwrap()
}

#[test]
fn sup_tail_halves_when_the_level_doubles() {
    let model = critical(1e-3);
    let stored = DeltaBand::stored();
    for (i, b) in [0.5, 1.0].into_iter().enumerate() {
        let e = sup_tail_ratio(&model, b, 2.0, 40_000, 2, &RngState::new(10 + i as u64)).unwrap();
        let band = stored.band(&format!("sup_ratio:b={b}"), 1e-3).unwrap_or(0.0);
        assert!(e.within(0.5, band), "b = {b}: {e:?}, band {band}");
    }
}

#[test]
fn local_times_integrate_to_the_lifetime() {
    let model = critical(1e-4);
    let mut s = ExcursionStream::new(model, RngState::new(11));
    let eps = 0.01;
    let mut seen = 0;
    while seen < 1_000 {
        let e = s.next_excursion(0.05, 2_000_000);
        if !e.complete {
            continue;
        }
        seen += 1;
        let top = (e.sup() / eps).ceil() as usize + 1;
        let integral: f64 = (0..top).map(|k| e.local_time(k as f64 * eps, eps).unwrap() * eps).sum();
        assert!((integral - e.lifetime()).abs() <= 0.02 * e.lifetime() + e.dt, "{integral} vs {}", e.lifetime());
    }
}

#[test]
fn excursion_below_a_level_has_no_local_time_there() {
    let e = Excursion { dt: 1e-3, beta: 1.0, offset: 0.0, heights: vec![0.0, 0.1, 0.3, 0.2, 0.0], complete: true };
    assert_eq!(e.local_time(0.5, 0.05).unwrap(), 0.0);
    assert!(e.sub_excursions(0.5).is_empty());
    assert!(e.first_passage(0.5).is_none());
}

#[test]
fn local_time_profile_is_flat_or_exponential() {
    let opts = SurveyOptions { reach: 0.5, horizon: 4.0, bandwidth: 0.02, workers: 2 };
    for (alpha, seed) in [(0.0, 12), (1.0, 13)] {
        let model = BrownianModel::new(alpha, 1.0, 1e-3).unwrap();
        let rows = local_time_profile(&model, &[0.75, 1.0], 0.5, 20_000, &opts, &RngState::new(seed)).unwrap();
        for (b, est, expected) in rows {
            assert!((expected - (-alpha * (b - 0.5)).exp()).abs() < 1e-15);
            // Grid bias at this step size stays well below 3%.
            assert!(est.within(expected, 0.03 * expected), "alpha {alpha} b {b}: {est:?} vs {expected}");
        }
    }
}

fn passage_mean(dt: f64, reps: u64, seed: u64) -> Estimate {
    let m: Moments =
        immortal_passages(&critical(dt), 1.0, reps, 2, &RngState::new(seed)).unwrap().iter().map(|p| p.first_passage).collect();
    Estimate { value: m.mean, se: m.se() }
}

#[test]
fn immortal_passage_mean_matches_the_refined_oracle() {
    // The left path is sqrt(2) times a three-dimensional Bessel process, so
    // the passage time at 1 has mean 1/6. The step-size band is measured by
    // refining the step fourfold.
    let coarse = passage_mean(4e-5, 4_000, 14);
    let fine = passage_mean(1e-5, 4_000, 14);
    let band = (coarse.value - fine.value).abs();
    assert!(fine.within(1.0 / 6.0, band), "{fine:?} band {band}");
}

#[test]
fn condensation_cap_is_exponential() {
    let caps: Vec<f64> = (0..10_000).map(|i| condensation_cap(1.0, &RngState::new(15).split(i))).collect();
    let d = ks_one_sample(&caps, |x| -(-x).exp_m1());
    assert!(ks_p_value(d, caps.len() as f64) > 1e-3, "D = {d}");
    assert!(condensation_cap(0.0, &RngState::new(1)).is_infinite());
}

#[test]
fn height_excursions_are_pinned() {
    let all = sample_height_excursions(critical(1e-3), 50.0, RngState::new(16));
    assert!(!all.is_empty());
    for e in &all {
        assert_eq!(e.heights[0], 0.0);
        assert_eq!(*e.heights.last().unwrap(), 0.0);
        assert!(e.heights[1..e.heights.len() - 1].iter().all(|&h| h > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn critical_condensation_is_the_immortal_path(seed in any::<u64>()) {
        let rng = RngState::new(seed);
        prop_assert_eq!(immortal_heights(&critical(1e-3), 0.5, &rng), condensation_heights(&critical(1e-3), 0.5, &rng));
    }

    #[test]
    fn capped_paths_lie_below(seed in any::<u64>(), alpha in 0.1f64..3.0) {
        let model = BrownianModel::new(alpha, 1.0, 1e-4).unwrap();
        let rng = RngState::new(seed);
        let full = immortal_heights(&model, 1.0, &rng);
        let capped = condensation_heights(&model, 1.0, &rng);
        for (a, b) in [(&full.left, &capped.left), (&full.right, &capped.right)] {
            prop_assert!(a.heights.iter().zip(&b.heights).all(|(x, y)| y <= x));
        }
    }

    #[test]
    fn sub_excursions_are_smaller(seed in any::<u64>(), k in 1u32..8) {
        let eps = 0.02;
        let mut s = ExcursionStream::new(critical(1e-3), RngState::new(seed));
        let e = s.next_excursion(eps, 100_000);
        for sub in e.sub_excursions(k as f64 * eps) {
            prop_assert!(sub.sup() <= e.sup());
            prop_assert!(sub.lifetime() <= e.lifetime());
            prop_assert!(sub.width(eps) <= e.width(eps));
        }
    }
}
