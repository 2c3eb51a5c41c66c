use proptest::prelude::*;

use screenlab::dist::*;
use screenlab::pricing::*;

/// Maximizer of `r` on `[a, b]` by dense scan plus ternary refinement.
fn argmax(r: impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let n = 20_000;
    let (mut p, mut best) = (a, r(a));
    for i in 1..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        if r(x) > best {
            (p, best) = (x, r(x));
        }
    }
    let step = (b - a) / n as f64;
    let (mut lo, mut hi) = ((p - step).max(a), (p + step).min(b));
    for _ in 0..200 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if r(m1) < r(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let x = 0.5 * (lo + hi);
    (x, r(x))
}

fn uniform(lo: f64, hi: f64) -> MarginalSpec {
    MarginalSpec::Uniform { lo, hi }
}

fn iid(a: f64, b: f64) -> MaxRatioGrid {
    build_grid(&FamilySpec::IidUniform { a, b }, (129, 129)).unwrap()
}

fn dip_curve() -> CurveSamples {
    CurveSamples(vec![[0.0, 0.0], [0.3, 0.24], [0.4, 0.28], [0.5, 0.4], [0.8, 0.7]])
}

#[test]
fn myerson_on_uniform() {
    let prob = OneDProblem::from_spec(&uniform(0.0, 1.0), 1001, 0.0).unwrap();
    let r = myerson_1d(&prob);
    assert!((r.price - 0.5).abs() < 1e-6);
    assert!((r.revenue - 0.25).abs() < 1e-9);
    for (v, phi) in prob.values.iter().zip(&r.phi) {
        if *v > 0.0 {
            assert!((phi - (2.0 * v - 1.0)).abs() < 1e-9);
        }
    }
    assert_eq!(r.phi, r.phi_ironed);
}

#[test]
fn myerson_on_squared_cdf() {
    let prob = OneDProblem::from_spec(&MarginalSpec::Power { lo: 0.0, hi: 1.0, k: 2.0 }, 1001, 0.0).unwrap();
    let r = myerson_1d(&prob);
    let (p, rev) = argmax(|p| p * (1.0 - p * p), 0.0, 1.0);
    assert!((r.price - p).abs() < 1e-4);
    assert!((r.revenue - rev).abs() < 1e-6, "{} {} vs {p} {rev}", r.price, r.revenue);
    assert!((r.threshold.unwrap() - p).abs() < 2e-3);
}

#[test]
fn myerson_on_a_point_mass() {
    let r = myerson_1d(&OneDProblem::point_mass(0.7, 0.2).unwrap());
    assert_eq!(r.price, 0.7);
    assert!((r.revenue - 0.5).abs() < 1e-12);
}

#[test]
fn myerson_on_a_gapped_marginal() {
    let spec = MarginalSpec::Mixture {
        components: vec![
            MixtureComponent { weight: 0.5, lo: 0.0, hi: 0.2 },
            MixtureComponent { weight: 0.5, lo: 0.8, hi: 1.0 },
        ],
    };
    let prob = OneDProblem::from_spec(&spec, 2001, 0.0).unwrap();
    let r = myerson_1d(&prob);
    assert!(r.phi_ironed.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    let (_, rev) = argmax(|p| p * (1.0 - spec.cdf(p)), 0.0, 1.0);
    assert!((r.revenue - rev).abs() < 1e-8);
}

#[test]
fn uniform_price_examples() {
    let r = optimal_uniform_price(&favorite_marginal(&iid(0.0, 1.0)), 0.0).unwrap();
    let (p, rev) = argmax(|p| p * (1.0 - p * p), 0.0, 1.0);
    assert!((r.price - p).abs() < 1e-3);
    assert!((r.revenue - rev).abs() < 1e-4);
    let r = optimal_uniform_price(&favorite_marginal(&iid(5.0, 6.0)), 0.0).unwrap();
    let p56 = 5.0 + (-10.0 + 112f64.sqrt()) / 6.0;
    // revenue is flat near the optimum, so the price is only pinned to a grid step
    assert!((r.price - p56).abs() < 1.0 / 128.0, "{} {} vs {p56}", r.price, r.revenue);
    assert!((r.revenue - p56 * (1.0 - (p56 - 5.0).powi(2))).abs() < 1e-4);
    let r = optimal_uniform_price(&favorite_marginal(&iid(0.0, 1.0)), 1.0).unwrap();
    assert!(!r.sells);
    assert_eq!(r.revenue, 0.0);
}

#[test]
fn bundle_price_examples() {
    let simplex = to_sum_ratio(SumSource::Spec(&FamilySpec::TruncatedUniformSimplex { a: 0.0, b: 1.0 }), (257, 33)).unwrap();
    let r = optimal_bundle_price(&simplex.sum_marginal(), 0.0).unwrap();
    assert!((r.price - 1.0 / 3f64.sqrt()).abs() < 1e-3);
    assert!((r.revenue - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-4);
    // sum of two independent uniforms: triangular CDF
    let tri = |s: f64| if s <= 1.0 { s * s / 2.0 } else { 1.0 - (2.0 - s).powi(2) / 2.0 };
    let (p, rev) = argmax(|p| p * (1.0 - tri(p)), 0.0, 2.0);
    let iid_sum = to_sum_ratio(SumSource::Spec(&FamilySpec::IidUniform { a: 0.0, b: 1.0 }), (257, 33)).unwrap();
    let r = optimal_bundle_price(&iid_sum.sum_marginal(), 0.0).unwrap();
    assert!((r.price - p).abs() < 2e-3, "{} vs {p}", r.price);
    assert!((r.revenue - rev).abs() < 1e-3);
    assert!((p - 0.8165).abs() < 1e-4 && (rev - 0.5443).abs() < 1e-4);
}

#[test]
fn singleton_menu_is_uniform_pricing() {
    let g = iid(0.0, 1.0);
    for p in [0.2, 0.5, 0.7] {
        let menu = MenuMechanism::uniform_price(p, 2);
        let r = menu_revenue(&menu, &g, 0.0).unwrap();
        assert!((r - p * (1.0 - p * p)).abs() < 1e-3, "p = {p}: {r}");
    }
}

#[test]
fn half_half_lottery_beats_uniform_on_shifted_uniform() {
    let g = iid(5.0, 6.0);
    let p = 5.0 + (-10.0 + 112f64.sqrt()) / 6.0;
    let base = menu_revenue(&MenuMechanism::uniform_price(p, 2), &g, 0.0).unwrap();
    let eps = 0.02;
    let mut menu = MenuMechanism::uniform_price(p, 2);
    menu.options.push(MenuOption { allocation: vec![0.5, 0.5], price: p - eps });
    let thaler = menu_revenue(&menu, &g, 0.0).unwrap();
    assert!(thaler > base + 1e-4, "{thaler} vs {base}");
}

#[test]
fn ties_go_to_the_higher_price() {
    let menu = MenuMechanism {
        options: vec![
            MenuOption { allocation: vec![1.0, 0.0], price: 0.5 },
            MenuOption { allocation: vec![0.0, 1.0], price: 0.3 },
        ],
    };
    // utility 0.2 from both options
    assert_eq!(menu.choose_index(&[0.7, 0.5]), Some(0));
    assert_eq!(menu.choose_index(&[0.2, 0.1]), None);
}

#[test]
fn counterexample_on_a_ratio_dip() {
    let ce = construct_counterexample(&dip_curve(), 0.35).unwrap();
    assert!(ce.gain > 0.0);
    assert!(ce.menu_revenue > ce.uniform_revenue);
    assert!(matches!(ce.spec, FamilySpec::PerfectlyCorrelated { .. }));
    assert_eq!(ce.menu.options.len(), 2);
    let slope = loglog_slope(&ce.ladder, 8).unwrap();
    assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn counterexample_needs_a_falling_ratio() {
    let mono = CurveSamples(vec![[0.0, 0.0], [0.4, 0.1], [0.8, 0.5]]);
    assert!(construct_counterexample(&mono, 0.4).is_err());
    assert!(construct_counterexample(&dip_curve(), -1.0).is_err());
}

#[test]
fn additive_counterexample_on_a_rising_ratio() {
    let rising = CurveSamples(vec![[0.0, 0.2], [0.5, 0.3], [1.0, 0.8], [2.0, 0.9]]);
    let ce = construct_additive_counterexample(&rising, 0.8).unwrap();
    assert!(ce.gain > 0.0);
    assert!(ce.menu_revenue > ce.bundle_revenue);
    let flat = CurveSamples(vec![[0.0, 0.5], [2.0, 0.5]]);
    assert!(construct_additive_counterexample(&flat, 0.8).is_err());
}

#[test]
fn one_agent_matches_uniform_pricing() {
    let spec = FamilySpec::IidUniform { a: 0.0, b: 1.0 };
    let marg = favorite_marginal(&build_grid(&spec, (257, 65)).unwrap());
    let rule = MultiAgentRule::new(vec![marg.clone()], 0.0).unwrap();
    let mc = simulate_multi_agent(&[spec], &rule, 200_000, 11).unwrap();
    let want = optimal_uniform_price(&marg, 0.0).unwrap().revenue;
    assert!((mc.mean - want).abs() < 4.0 * mc.std_error, "{} +- {} vs {want}", mc.mean, mc.std_error);
}

#[test]
fn two_uniform_agents_earn_five_twelfths() {
    let spec = FamilySpec::UniformAboveCurve { marginal: uniform(0.0, 1.0), curve: CurveSamples(vec![[0.0, 0.0], [1.0, 0.5]]) };
    let m = Marginal::from_spec(&uniform(0.0, 1.0), 1001);
    let rule = MultiAgentRule::new(vec![m.clone(), m], 0.0).unwrap();
    let mc = simulate_multi_agent(&[spec.clone(), spec], &rule, 400_000, 5).unwrap();
    // second price with reserve 1/2: 2 int_{1/2}^1 (2v - 1) v dv... = 5/12
    let want = 5.0 / 12.0;
    assert!((mc.mean - want).abs() < 4.0 * mc.std_error, "{} +- {}", mc.mean, mc.std_error);
    let same = simulate_multi_agent(&[FamilySpec::IidUniform { a: 0.0, b: 1.0 }], &MultiAgentRule::new(vec![Marginal::from_spec(&uniform(0.0, 1.0), 101)], 0.0).unwrap(), 10_000, 5).unwrap();
    let again = simulate_multi_agent(&[FamilySpec::IidUniform { a: 0.0, b: 1.0 }], &MultiAgentRule::new(vec![Marginal::from_spec(&uniform(0.0, 1.0), 101)], 0.0).unwrap(), 10_000, 5).unwrap();
    assert_eq!(same, again);
}

#[test]
fn winner_pays_the_threshold() {
    let m = Marginal::from_spec(&uniform(0.0, 1.0), 1001);
    let out = multi_agent_allocate(&[m.clone(), m.clone()], &[[0.9, 0.1], [0.3, 0.7]], 0.0).unwrap();
    assert_eq!(out.winner, Some(0));
    assert_eq!(out.outcome, 0);
    assert!((out.payment - 0.7).abs() < 1e-9);
    let none = multi_agent_allocate(&[m.clone(), m.clone()], &[[0.2, 0.1], [0.1, 0.4]], 0.0).unwrap();
    assert_eq!(none.winner, None);
    let lone = multi_agent_allocate(&[m], &[[0.8, 0.2]], 0.0).unwrap();
    assert!((lone.payment - 0.5).abs() < 1e-9);
}

#[test]
fn irregular_agents_are_refused() {
    let spec = MarginalSpec::Mixture {
        components: vec![
            MixtureComponent { weight: 0.9, lo: 0.0, hi: 1.0 },
            MixtureComponent { weight: 0.1, lo: 0.4, hi: 0.5 },
        ],
    };
    assert!(MultiAgentRule::new(vec![Marginal::from_spec(&spec, 501)], 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn singleton_menu_matches_the_marginal(j in 1usize..128) {
        let g = iid(0.0, 1.0);
        let m = favorite_marginal(&g);
        let p = m.nodes[j];
        let r = menu_revenue(&MenuMechanism::uniform_price(p, 2), &g, 0.0).unwrap();
        prop_assert!((r - p * (1.0 - m.cdf[j])).abs() < 1e-6);
    }

    #[test]
    fn counterexample_gain_is_positive(r0 in 0.3f64..0.9, drop in 0.05f64..0.25, p in 0.2f64..0.45) {
        // ratio r0 up to p, then falling by `drop` over the next stretch
        let q = (p + 0.1).min(0.999);
        let curve = CurveSamples(vec![[0.0, 0.0], [p, r0 * p], [q, (r0 - drop) * q], [1.0, (r0 - drop)]]);
        let ce = construct_counterexample(&curve, p + 0.05).unwrap();
        prop_assert!(ce.gain > 0.0);
        prop_assert!(ce.menu_revenue > ce.uniform_revenue);
    }
}
