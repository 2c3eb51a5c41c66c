use proptest::prelude::*;

use screenlab::amort::*;
use screenlab::dist::*;
use screenlab::oracle::*;

fn iid(a: f64, b: f64, n: usize) -> MaxRatioGrid {
    build_grid(&FamilySpec::IidUniform { a, b }, (n, n)).unwrap()
}

fn simplex(n: usize) -> SumRatioGrid {
    to_sum_ratio(SumSource::Spec(&FamilySpec::TruncatedUniformSimplex { a: 0.0, b: 1.0 }), (n, n)).unwrap()
}

fn nearest(field: &AmortizationField, t: [f64; 2]) -> usize {
    let d = |p: &[f64; 2]| (p[0] - t[0]).hypot(p[1] - t[1]);
    (0..field.nodes().len()).min_by(|a, b| d(&field.nodes()[*a]).total_cmp(&d(&field.nodes()[*b]))).unwrap()
}

fn opts() -> VerifyOptions {
    VerifyOptions::default()
}

fn bimodal() -> MarginalSpec {
    MarginalSpec::Mixture {
        components: vec![
            MixtureComponent { weight: 0.49, lo: 0.0, hi: 0.2 },
            MixtureComponent { weight: 0.49, lo: 0.8, hi: 1.0 },
            MixtureComponent { weight: 0.02, lo: 0.0, hi: 1.0 },
        ],
    }
}

fn square() -> CurveSamples {
    CurveSamples((0..=200).map(|i| {
        let x = i as f64 / 200.0;
        [x, x * x]
    }).collect())
}

/// Sum-ratio CSV whose density does not depend on the ratio, with weight
/// `w(s)` on bundle values.
fn sum_grid(w: impl Fn(f64) -> f64) -> (tempfile::TempDir, SumRatioGrid) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sum.csv");
    let n = 65;
    let mut csv = String::from("s,theta,density\n");
    for j in 0..n {
        let s = 0.05 + 0.95 * j as f64 / (n - 1) as f64;
        for k in 0..33 {
            csv.push_str(&format!("{s},{},{}\n", k as f64 / 32.0, w(s)));
        }
    }
    std::fs::write(&path, csv).unwrap();
    let g = to_sum_ratio(SumSource::Spec(&FamilySpec::RawGrid { path }), (n, 33)).unwrap();
    (dir, g)
}

#[test]
fn iid_uniform_formula_values() {
    let f = build_extension_2d(&iid(0.0, 1.0, 81), ExtensionMethod::Formula).unwrap();
    let i = nearest(&f, [0.8, 0.4]);
    assert_eq!(f.nodes()[i], [0.8, 0.4]);
    assert!((f.phi[i][0] - 0.575).abs() < 2e-3, "phi1 = {}", f.phi[i][0]);
    assert!((f.phi[i][1] - 0.2875).abs() < 1e-3, "phi2 = {}", f.phi[i][1]);
    assert!(f.identity_error() < 1e-12);
    assert!(f.lambda.iter().all(|l| l[0] >= 0.0));
}

#[test]
fn independent_ratio_gives_scaled_virtual_values() {
    let spec = FamilySpec::UniformAboveCurve {
        marginal: MarginalSpec::Uniform { lo: 0.0, hi: 1.0 },
        curve: CurveSamples(vec![[0.0, 0.0], [1.0, 0.3]]),
    };
    let f = build_extension_2d(&build_grid(&spec, (64, 64)).unwrap(), ExtensionMethod::Formula).unwrap();
    for (t, p) in f.nodes().iter().zip(&f.phi) {
        if t[0] > 0.0 {
            assert!((p[0] - (2.0 * t[0] - 1.0)).abs() < 1e-9);
            assert!((p[1] - t[1] / t[0] * (2.0 * t[0] - 1.0)).abs() < 1e-9);
        }
    }
}

#[test]
fn right_boundary_has_no_inflow() {
    let f = build_extension_2d(&iid(0.0, 1.0, 33), ExtensionMethod::Formula).unwrap();
    for (i, t) in f.nodes().iter().enumerate() {
        if t[0] == 1.0 {
            assert_eq!(f.lambda[i][0], 0.0);
            assert!((f.phi[i][0] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn divergence_residual_is_first_order_for_the_formula_build() {
    let r32 = verify_divergence(&build_extension_2d(&iid(0.0, 1.0, 32), ExtensionMethod::Formula).unwrap(), &opts());
    let r64 = verify_divergence(&build_extension_2d(&iid(0.0, 1.0, 64), ExtensionMethod::Formula).unwrap(), &opts());
    assert!(r64.passed);
    assert!(r64.stat("sup_residual") <= 0.1);
    assert!(r64.stat("sup_residual") <= 0.6 * r32.stat("sup_residual") + 1e-12);
}

#[test]
fn integrated_build_is_exact_inside() {
    let f = build_extension_2d(&iid(0.0, 1.0, 64), ExtensionMethod::Integrated).unwrap();
    let r = verify_divergence(&f, &opts());
    assert!(r.passed);
    assert!(r.stat("sup_residual") <= 1e-10, "{}", r.stat("sup_residual"));
}

#[test]
fn seeded_divergence_fault_is_located() {
    let mut f = build_extension_2d(&iid(0.0, 1.0, 32), ExtensionMethod::Integrated).unwrap();
    let i = nearest(&f, [0.5, 0.25]);
    f.lambda[i][0] += 5.0;
    let r = verify_divergence(&f, &opts());
    assert!(!r.passed);
    let w = r.check("divergence").unwrap().witness.clone().unwrap();
    for p in &w {
        assert!((p[0] - 0.5).abs() < 0.1 && (p[1] - 0.25).abs() < 0.1, "witness {w:?}");
    }
}

#[test]
fn boundary_examples() {
    let ok = build_extension_2d(&iid(0.0, 1.0, 32), ExtensionMethod::Formula).unwrap();
    let r = verify_boundary(&ok, &opts());
    assert!(r.passed);
    // v = 0 collapses to a point
    assert_eq!(r.stat("singleton_left_boundary"), 1.0);
    let mut bad = build_extension_2d(&iid(5.0, 6.0, 32), ExtensionMethod::Formula).unwrap();
    assert!(verify_boundary(&bad, &opts()).passed);
    let n = bad.nodes().len();
    for i in n - 32..n {
        bad.lambda[i][0] = 0.5;
    }
    let r = verify_boundary(&bad, &opts());
    assert!(!r.passed);
    assert!(!r.check("boundary_right").unwrap().passed());
}

#[test]
fn tangency_examples() {
    let f = build_extension_2d(&iid(0.0, 1.0, 64), ExtensionMethod::Formula).unwrap();
    for (t, l) in f.nodes().iter().zip(&f.lambda) {
        if t[0] > 0.0 && l[0] > 0.0 {
            assert!((l[1] / l[0] - t[1] / t[0]).abs() < 1e-9);
        }
    }
    let r = verify_tangency(&f, &opts());
    assert!(r.passed && r.stat("max_deviation") < 1e-12);
    let spec = FamilySpec::UniformAboveCurve { marginal: MarginalSpec::Power { lo: 0.0, hi: 1.0, k: 2.0 }, curve: square() };
    let dev = |n| {
        let f = build_extension_2d(&build_grid(&spec, (n, n)).unwrap(), ExtensionMethod::Integrated).unwrap();
        let r = verify_tangency(&f, &opts());
        assert!(r.passed);
        r.stat("max_deviation")
    };
    assert!(dev(64) < dev(32));
}

#[test]
fn uniform_pricing_is_pointwise_optimal_for_iid_uniform() {
    let f = build_extension_2d(&iid(0.0, 1.0, 129), ExtensionMethod::Formula).unwrap();
    let r = verify_vsm_uniform(&f, 0.0, &opts());
    assert!(r.passed, "{:?}", r.checks);
    assert!((r.stat("threshold") - 1.0 / 3f64.sqrt()).abs() < 1e-2);
    let above = verify_vsm_uniform(&f, 1.5, &opts());
    assert!(above.passed);
}

#[test]
fn angle_condition_fails_for_shifted_uniform() {
    let f = build_extension_2d(&iid(5.0, 6.0, 64), ExtensionMethod::Formula).unwrap();
    let r = verify_vsm_uniform(&f, 0.0, &opts());
    assert!(!r.passed);
    assert!(!r.check("angle").unwrap().passed());
    assert!(r.check("angle").unwrap().witness.is_some());
}

#[test]
fn threshold_mechanism_is_tight() {
    let f = build_extension_2d(&iid(0.0, 1.0, 257), ExtensionMethod::Formula).unwrap();
    for p in [0.3, 0.6, 0.8] {
        let vs = f.virtual_surplus(|t| if t[0] >= p { [1.0, 0.0] } else { [0.0, 0.0] });
        let rev = p * (1.0 - p * p);
        assert!((vs - rev).abs() < 1e-2, "p = {p}: {vs} vs {rev}");
    }
}

#[test]
fn sum_extension_closed_form() {
    let f = build_sum_extension(&simplex(129)).unwrap();
    let phi_sum = |s: f64| (3.0 * s * s - 1.0) / (2.0 * s);
    let i = nearest(&f, [0.5, 0.25]);
    let t = f.nodes()[i];
    let s = t[0] + t[1];
    assert!((t[0] - 0.5).abs() < 0.01 && (t[1] - 0.25).abs() < 0.01);
    assert!((f.phi[i][0] - t[0] / s * phi_sum(s)).abs() < 1e-2, "phi1 = {}", f.phi[i][0]);
    assert!((f.phi[i][1] - t[1] / s * phi_sum(s)).abs() < 1e-2);
    assert!(f.diagnostics["sum_identity_error"] < 1e-9);
    for (t, p) in f.nodes().iter().zip(&f.phi) {
        if (t[0] - t[1]).abs() < 1e-12 && p[0].is_finite() {
            assert!((p[0] - p[1]).abs() < 1e-12);
        }
    }
}

#[test]
fn sum_canonical_follows_rays_on_the_simplex() {
    let g = simplex(65);
    let f = build_sum_canonical(&g).unwrap();
    let m = g.sum_marginal();
    for (i, (t, l)) in f.nodes().iter().zip(&f.lambda).enumerate() {
        let s = t[0] + t[1];
        if s <= 0.05 || f.geometry.dens[i] <= 1e-12 {
            continue;
        }
        assert!((l[0] * t[1] - l[1] * t[0]).abs() <= 1e-9 * (l[0].abs() + l[1].abs()).max(1e-12));
        let want = f.geometry.dens[i] * (1.0 - m.cdf_at(s)) / m.pdf_at(s);
        assert!((l[0] + l[1] - want).abs() <= 1e-6 * want.max(1.0));
    }
    let shift = verify_shift_condition(&f, &opts());
    assert!(shift.passed);
    assert!(shift.stat("min_slack").abs() < 1e-9);
    assert!(verify_divergence(&f, &opts()).passed);
}

#[test]
fn shift_condition_fails_when_the_ratio_rises_with_s() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rise.csv");
    let mut csv = String::from("s,theta,density\n");
    for j in 0..65 {
        let s = 0.1 + 0.9 * j as f64 / 64.0;
        for k in 0..33 {
            let th = k as f64 / 32.0;
            // ratio mass moves toward equal split as s grows
            csv.push_str(&format!("{s},{th},{}\n", (4.0 * s * (th - 0.5)).exp()));
        }
    }
    std::fs::write(&path, csv).unwrap();
    let g = to_sum_ratio(SumSource::Spec(&FamilySpec::RawGrid { path }), (65, 33)).unwrap();
    let r = verify_shift_condition(&build_sum_canonical(&g).unwrap(), &opts());
    assert!(!r.passed);
    assert!(r.check("shift").unwrap().witness.is_some());
}

#[test]
fn bundle_pointwise_optimality() {
    let f = build_sum_extension(&simplex(129)).unwrap();
    let r = verify_vsm_bundle(&f, 0.0, &opts());
    assert!(r.passed, "{:?}", r.checks);
    assert!((r.stat("bundle_price") - 1.0 / 3f64.sqrt()).abs() < 1e-2);
    let (_d, g) = sum_grid(|s| if (0.4..0.8).contains(&s) { 0.02 } else { 1.0 });
    let r = verify_vsm_bundle(&build_sum_extension(&g).unwrap(), 0.0, &opts());
    assert!(!r.check("sum_monotone").unwrap().passed());
}

#[test]
fn bundle_extension_is_tight() {
    let g = simplex(257);
    let f = build_sum_extension(&g).unwrap();
    for p in [0.4, 0.7] {
        let vs = f.virtual_surplus(|t| if t[0] + t[1] >= p { [1.0, 1.0] } else { [0.0, 0.0] });
        let rev = p * (1.0 - p * p);
        assert!((vs - rev).abs() < 1e-2, "p = {p}: {vs} vs {rev}");
    }
}

#[test]
fn regular_marginal_needs_no_ironing() {
    let spec = FamilySpec::PerfectlyCorrelated { marginal: MarginalSpec::Uniform { lo: 0.0, hi: 1.0 }, curve: square() };
    let ir = build_ironed_quantile(&build_grid(&spec, (129, 17)).unwrap()).unwrap();
    assert!(ir.ironed_intervals.is_empty());
    for (a, b) in ir.phi1.iter().zip(&ir.phi1_bar) {
        assert!((a - b).abs() < 1e-9);
    }
    for (a, b) in ir.phi2.iter().zip(&ir.phi2_bar) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn bimodal_marginal_is_ironed_across_the_gap() {
    let spec = FamilySpec::PerfectlyCorrelated { marginal: bimodal(), curve: square() };
    let g = build_grid(&spec, (129, 33)).unwrap();
    let ir = build_ironed_quantile(&g).unwrap();
    assert_eq!(ir.ironed_intervals.len(), 1);
    let (a, b) = ir.ironed_intervals[0];
    let inside: Vec<f64> = ir.q1.iter().zip(&ir.phi1_bar).filter(|(q, _)| **q > a && **q < b).map(|(_, p)| *p).collect();
    assert!(inside.len() > 3);
    for p in &inside {
        assert!((p - inside[0]).abs() < 1e-9);
    }
    // the pooled stretch bridges favorite values from the lower mode to the upper one
    let t_at = |q: f64| ir.t1[ir.q1.iter().position(|x| *x >= q).unwrap()];
    assert!(t_at(a) >= 0.75 && t_at(b) <= 0.25);
    // majorant above the revenue curve: prefix integrals of the lift are
    // non-negative, so suffix integrals are non-positive
    assert!(ir.correction.iter().all(|c| *c <= 1e-12));
    assert!(ir.diagnostics["integral_change"] <= 1e-6);
    let r = verify_ironed_dominance(&ir, &opts());
    assert!(r.passed, "{:?}", r.checks);
}

#[test]
fn linear_band_gives_dominance_with_equality() {
    let spec = FamilySpec::PerfectlyCorrelated { marginal: bimodal(), curve: CurveSamples(vec![[0.0, 0.0], [1.0, 0.6]]) };
    let ir = build_ironed_quantile(&build_grid(&spec, (129, 17)).unwrap()).unwrap();
    let r = verify_ironed_dominance(&ir, &opts());
    assert!(r.passed);
    assert!(r.stat("min_dominance_margin").abs() < 1e-9);
}

#[test]
fn concave_band_breaks_dominance() {
    let curve = CurveSamples((0..=200).map(|i| {
        let x = i as f64 / 200.0;
        [x, x * (0.9 - 0.4 * x)]
    }).collect());
    let spec = FamilySpec::PerfectlyCorrelated { marginal: bimodal(), curve };
    let ir = build_ironed_quantile(&build_grid(&spec, (129, 17)).unwrap()).unwrap();
    let r = verify_ironed_dominance(&ir, &opts());
    assert!(!r.passed);
}

#[test]
fn field_csv_has_one_row_per_node() {
    let f = build_extension_2d(&iid(0.0, 1.0, 16), ExtensionMethod::Formula).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    write_field_csv(&f, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t1,t2,lambda1,lambda2,phi1,phi2"));
    assert_eq!(lines.count(), f.nodes().len());
    write_field_json(&f, &dir.path().join("field.json")).unwrap();
    let spec = FamilySpec::PerfectlyCorrelated { marginal: bimodal(), curve: square() };
    let ir = build_ironed_quantile(&build_grid(&spec, (33, 9)).unwrap()).unwrap();
    write_ironed_csv(&ir, &dir.path().join("ironed.csv")).unwrap();
}

fn small_instance(spec: &FamilySpec, setting: Setting) -> DiscreteInstance {
    let g = build_grid(spec, (65, 65)).unwrap();
    discretize(&g, 30, setting, 0.0, CostForm::Max).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn flow_amortization_bounds_every_ic_mechanism(
        family in 0usize..3,
        seed in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        let (spec, setting) = match family {
            0 => (FamilySpec::IidUniform { a: 0.0, b: 1.0 }, Setting::MultiOutcome),
            1 => (FamilySpec::IidUniform { a: 5.0, b: 6.0 }, Setting::MultiOutcome),
            _ => (FamilySpec::TruncatedUniformSimplex { a: 0.0, b: 1.0 }, Setting::MultiProduct),
        };
        let inst = small_instance(&spec, setting);
        let amort = discrete_amortization(&inst).unwrap();
        prop_assert!(amort.conservation_error(&inst) < 1e-12);
        let scale = inst.scale();
        let w: Vec<Vec<f64>> = (0..inst.k())
            .map(|t| (0..inst.m()).map(|i| inst.probs[t] * scale * seed[(2 * t + i) % seed.len()]).collect())
            .collect();
        let sol = solve_perturbed(&inst, &w).unwrap();
        prop_assert!(verify_ic(&sol, &inst).ic_residual <= 1e-8);
        prop_assert!(amort.slack(&inst, &sol) >= -1e-6 * scale);
    }
}
