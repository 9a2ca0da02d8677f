use branchlab::discrete_lab::{probe_conjectures, run_ratio_limits, run_tail_convergence, LabContext, Mode};
use branchlab::exact::{
    brute_force_tables, conditioned_prefix_law, height_tail, immortal_prefix_law, progeny_pmf, tv_distance, Condition,
    EngineOptions, ForestLaw, PrefixEnumeration, PrefixLaw,
};
use branchlab::offspring::OffspringDist;
use branchlab::rng::RngState;
use branchlab::samplers::{
    conditioned_batch, immortal_prefix_batch, sample_forest, sample_gw, GwDraw, RejectionOptions,
};
use branchlab::stats::{chi_square_gof, Estimate};
use branchlab::tree::{DegreeSet, Functional, PlaneTree};
use proptest::prelude::*;

fn geometric() -> OffspringDist {
    OffspringDist::geometric(0.5, None).unwrap()
}

fn tree(degrees: &[u32]) -> PlaneTree {
    PlaneTree::from_degrees(degrees.to_vec()).unwrap()
}

/// Draws `n` trees; the second field counts draws over the vertex cap.
fn draw_trees(p: &OffspringDist, n: usize, seed: u64) -> (Vec<PlaneTree>, u64) {
    let mut r = RngState::new(seed);
    let mut overflow = 0;
    let trees = (0..n)
        .filter_map(|_| match sample_gw(p, &mut r, 1_000_000) {
            GwDraw::Tree(t) => Some(t),
            GwDraw::Overflow => {
                overflow += 1;
                None
            }
        })
        .collect();
    (trees, overflow)
}

#[test]
fn binary_root_degree_and_three_vertex_trees() {
    let (trees, overflow) = draw_trees(&OffspringDist::binary_critical(), 100_000, 1);
    // An oversized tree certainly has a branching root.
    let two = trees.iter().filter(|t| t.degrees()[0] == 2).count() as u64 + overflow;
    assert!(Estimate::proportion(two, 100_000).within(0.5, 0.0));
    let three = trees.iter().filter(|t| t.len() == 3).count() as u64;
    assert!(Estimate::proportion(three, 100_000).within(0.125, 0.0));
}

#[test]
fn sampled_progeny_matches_exact_pmf() {
    let p = OffspringDist::binary_critical();
    let pmf = progeny_pmf(&p, 1, 21, &EngineOptions::default()).unwrap();
    let (trees, overflow) = draw_trees(&p, 50_000, 2);
    // Cells: sizes 1, 3, ..., 21 and one cell for everything larger.
    let mut observed = vec![0u64; 12];
    observed[11] = overflow;
    for t in &trees {
        let cell = if t.len() <= 21 { (t.len() - 1) / 2 } else { 11 };
        observed[cell] += 1;
    }
    let mut probs: Vec<f64> = (0..11).map(|i| pmf[2 * i + 1]).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let (_, _, p_value) = chi_square_gof(&observed, &probs);
    assert!(p_value > 1e-4, "p = {p_value}");
}

#[test]
fn forest_of_two_singletons() {
    let p = OffspringDist::binary_critical();
    let mut r = RngState::new(3);
    let n = 100_000;
    let hits = (0..n).filter(|_| sample_forest(&p, 2, &mut r, 1_000_000).is_some_and(|f| f.iter().all(|t| t.len() == 1))).count();
    assert!(Estimate::proportion(hits as u64, n).within(0.25, 0.0));
    let exact = progeny_pmf(&p, 2, 2, &EngineOptions::default()).unwrap()[2];
    assert!((exact - 0.25).abs() < 1e-15);
}

#[test]
fn immortal_root_is_size_biased() {
    let p = geometric();
    let sample = immortal_prefix_batch(&p, 1, 100_000, &RngState::new(4), 2);
    for k in 1..6u32 {
        let hits = sample.iter().filter(|t| t.degrees()[0] == k).count() as u64;
        let target = k as f64 * 0.5f64.powi(k as i32 + 1);
        assert!(Estimate::proportion(hits, 100_000).within(target, 0.0), "k = {k}");
    }
}

#[test]
fn immortal_prefix_law_at_height_three() {
    let p = OffspringDist::binary_critical();
    let exact = immortal_prefix_law(&p, 3, &PrefixEnumeration::default()).unwrap();
    assert!((exact.total() - 1.0).abs() < 1e-12);
    let sample = immortal_prefix_batch(&p, 3, 1_000_000, &RngState::new(5), 4);
    let tv = tv_distance(&PrefixLaw::empirical(3, &sample), &exact).unwrap();
    assert!(tv.upper <= 0.01, "{tv:?}");
}

#[test]
fn immortal_star_masses() {
    let law = immortal_prefix_law(&geometric(), 1, &PrefixEnumeration { node_cap: Some(30), max_trees: 100 }).unwrap();
    for k in 1..10u32 {
        let mut d = vec![k];
        d.extend(std::iter::repeat(0).take(k as usize));
        let expected = k as f64 * 0.5f64.powi(k as i32 + 1);
        assert!((law.prob(&tree(&d)) - expected).abs() < 1e-14);
    }
}

#[test]
fn height_tail_closed_forms() {
    let v = height_tail(&geometric(), 10);
    for (n, x) in v.iter().enumerate() {
        assert!((x - 1.0 / (n as f64 + 2.0)).abs() < 1e-9, "n = {n}");
    }
    assert!((height_tail(&OffspringDist::binary_critical(), 1)[1] - 3.0 / 8.0).abs() < 1e-15);
}

#[test]
fn conditioned_prefix_oracles() {
    let lim = PrefixEnumeration { node_cap: Some(14), max_trees: 1_000_000 };
    let law = conditioned_prefix_law(&geometric(), &Functional::Height, Condition::Tail(1), 1, &lim, EngineOptions::default())
        .unwrap();
    assert!((law.prob(&tree(&[1, 0])) - 0.375).abs() < 1e-9);
    let law = conditioned_prefix_law(
        &OffspringDist::binary_critical(),
        &Functional::TotalProgeny,
        Condition::Point(3),
        1,
        &PrefixEnumeration::default(),
        EngineOptions::default(),
    )
    .unwrap();
    assert!((law.prob(&tree(&[2, 0, 0])) - 1.0).abs() < 1e-12);
}

#[test]
fn rejection_matches_conditioned_law() {
    let p = OffspringDist::binary_critical();
    let f = Functional::Height;
    let exact =
        conditioned_prefix_law(&p, &f, Condition::Tail(4), 1, &PrefixEnumeration::default(), EngineOptions::default()).unwrap();
    let batch =
        conditioned_batch(&p, &f, Condition::Tail(4), 100_000, &RngState::new(6), &RejectionOptions::default(), 2, |t| t.restrict(1))
            .unwrap();
    let tv = tv_distance(&PrefixLaw::empirical(1, &batch.items), &exact).unwrap();
    assert!(tv.upper <= 0.02, "{tv:?}");

    let root = conditioned_batch(&p, &f, Condition::Tail(0), 20_000, &RngState::new(7), &RejectionOptions::default(), 1, |t| {
        t.degrees()[0]
    })
    .unwrap();
    assert!(root.items.iter().all(|&d| d == 2));
    let rate = Estimate::proportion(root.items.len() as u64, root.attempts);
    assert!(rate.within(0.5, 0.0));
}

/// `P_z[some generation exceeds n]` for critical binary branching, by value
/// iteration on generation sizes.
fn binary_width_exceedance(n: usize) -> Vec<f64> {
    let binom = |z: usize, j: usize| -> f64 { (0..j).fold(1.0, |a, i| a * (z - i) as f64 / (i + 1) as f64) };
    let mut f = vec![0.0; n + 1];
    for _ in 0..20_000 {
        let mut g = vec![0.0; n + 1];
        for z in 1..=n {
            g[z] = (0..=z)
                .map(|j| {
                    let w = binom(z, j) * 0.5f64.powi(z as i32);
                    if 2 * j > n { w } else { w * f[2 * j] }
                })
                .sum();
        }
        f = g;
    }
    f
}

#[test]
fn width_law_matches_value_iteration() {
    let n = 8;
    let oracle = binary_width_exceedance(n);
    let binary = OffspringDist::binary_critical();
    let mut law = ForestLaw::new(&binary, &Functional::Width, n as u64, EngineOptions::default()).unwrap();
    for k in 1..=n {
        assert!((law.tail(k as u64, n as i64).unwrap() - oracle[k]).abs() < 1e-10, "k = {k}");
    }
    // Generation sizes 1, 2 and 4 give exactly proportional exceedance
    // probabilities, so r_2 conditioned on a large width is already the
    // immortal law.
    assert!((oracle[4] - 4.0 * oracle[1]).abs() < 1e-12);
    let ctx = LabContext::new(1, 1);
    let rep = run_tail_convergence(&OffspringDist::binary_critical(), &Functional::Width, 2, &[8, 16, 32], Mode::Exact, &ctx)
        .unwrap();
    assert!(rep.series("tv").iter().all(|x| x.1 < 1e-10));
}

#[test]
fn engine_agrees_with_enumeration_on_leaves() {
    let p = OffspringDist::binary_critical();
    let f = Functional::leaves();
    let t = &brute_force_tables(&p, &f, 11, 5, &[1]).unwrap()[0];
    let mut law = ForestLaw::new(&p, &f, 5, EngineOptions::default()).unwrap();
    // Binary trees with m leaves have 2m - 1 vertices, so at most 9 here and
    // the enumeration up to 11 vertices is exhaustive.
    for m in 1..=5 {
        assert!((law.point(1, m as i64).unwrap() - t.point[m]).abs() < 1e-12);
    }
    assert!((law.point(1, 2).unwrap() - 0.125).abs() < 1e-15);
}

#[test]
fn height_tail_convergence_on_a_long_grid() {
    let ctx = LabContext::new(1, 1);
    let rep = run_tail_convergence(&OffspringDist::binary_critical(), &Functional::Height, 2, &[16, 64, 256], Mode::Exact, &ctx)
        .unwrap();
    let tv = rep.series("tv");
    assert!(tv[2].1 < tv[0].1 && tv[2].1 < 0.02, "{tv:?}");
}

#[test]
fn geometric_height_ratio_at_one_hundred() {
    let ctx = LabContext::new(1, 1);
    let rep = run_ratio_limits(&geometric(), &Functional::Height, &[3], &[], &[100], Mode::Exact, &ctx).unwrap();
    let v = rep.find("tail_ratio", 100, 3, 0).unwrap().value.unwrap();
    // q_n = (n + 1) / (n + 2) gives the ratio in closed form.
    let q = 101.0 / 102.0;
    assert!((v - (1.0 - q * q * q) / (1.0 - q)).abs() < 1e-9);
    assert!((v - 3.0).abs() < 0.03);
}

#[test]
fn probe_is_exploratory() {
    let p = OffspringDist::explicit(&[0.3, 0.5, 0.2]).unwrap();
    let rep = probe_conjectures(&p, &Functional::Height, 1, &[2, 3], 500, &LabContext::new(9, 1)).unwrap();
    assert!(rep.exploratory);
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("n,quantity"));
}

fn functionals() -> Vec<Functional> {
    vec![
        Functional::Height,
        Functional::Width,
        Functional::MaxOutDegree,
        Functional::TotalProgeny,
        Functional::leaves(),
        Functional::CountInSet { set: DegreeSet::finite([1, 3]) },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn subtrees_never_exceed_the_tree(seed in any::<u64>(), b in 1u32..6) {
        let p = OffspringDist::explicit(&[0.45, 0.2, 0.2, 0.15]).unwrap();
        if let GwDraw::Tree(t) = sample_gw(&p, &mut RngState::new(seed), 50_000) {
            for f in functionals() {
                let whole = t.functional(&f);
                for s in t.subtrees_above(b) {
                    prop_assert!(s.functional(&f) <= whole);
                }
            }
        }
    }

    #[test]
    fn restriction_is_a_prefix(seed in any::<u64>(), h in 0u32..5) {
        if let GwDraw::Tree(t) = sample_gw(&geometric(), &mut RngState::new(seed), 50_000) {
            let r = t.restrict(h);
            prop_assert!(r.height() <= h as u64);
            prop_assert_eq!(r.restrict(h), r.clone());
            prop_assert_eq!(PlaneTree::from_degrees(r.degrees().to_vec()).unwrap(), r.clone());
            prop_assert_eq!(PlaneTree::from_labels(r.labels()).unwrap(), r);
        }
    }

    #[test]
    fn exact_tails_are_monotone_in_n_and_k(n in 0i64..20, k in 1u64..4) {
        let p = OffspringDist::binary_critical();
        for f in [Functional::Height, Functional::Width, Functional::TotalProgeny] {
            let mut law = ForestLaw::new(&p, &f, 21, EngineOptions::default()).unwrap();
            let a = law.tail(k, n).unwrap();
            prop_assert!(law.tail(k, n + 1).unwrap() <= a + 1e-15);
            prop_assert!(law.tail(k + 1, n).unwrap() + 1e-15 >= a);
        }
    }
}
