use std::path::PathBuf;

use proptest::prelude::*;

use screenlab::dist::*;
use screenlab::oracle::*;
use screenlab::pricing::{MenuMechanism, MenuOption};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/golden").join(name)
}

/// Brute force: every vertex is the solution of `n` tight constraints drawn
/// from the rows and the bounds.
fn vertex_max(p: &LpProblem) -> Option<f64> {
    let n = p.n_vars;
    let mut rows: Vec<(Vec<f64>, f64)> = p
        .rows
        .iter()
        .zip(&p.rhs)
        .map(|(r, b)| {
            let mut a = vec![0.0; n];
            for (c, v) in r {
                a[*c] += v;
            }
            (a, *b)
        })
        .collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        rows.push((e.clone(), p.upper[i]));
        e[i] = -1.0;
        rows.push((e, -p.lower[i]));
    }
    let feasible = |x: &[f64]| rows.iter().all(|(a, b)| a.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() <= b + 1e-9);
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn walk(d: usize, start: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize]), total: usize) {
        if d == pick.len() {
            f(pick);
            return;
        }
        for i in start..total {
            pick[d] = i;
            walk(d + 1, i + 1, pick, f, total);
        }
    }
    let total = rows.len();
    walk(
        0,
        0,
        &mut pick,
        &mut |idx: &[usize]| {
            let a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].0.clone()).collect();
            let b: Vec<f64> = idx.iter().map(|&i| rows[i].1).collect();
            if let Some(x) = gauss(a, b) {
                if feasible(&x) {
                    let v: f64 = p.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        },
        total,
    );
    best
}

fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let r = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[r][c].abs() < 1e-9 {
            return None;
        }
        a.swap(c, r);
        b.swap(c, r);
        for i in 0..n {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in 0..n {
                    a[i][j] -= f * a[c][j];
                }
                b[i] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Best posted price for one item: some type's value is optimal.
fn best_posted(values: &[f64], probs: &[f64], cost: f64) -> f64 {
    values
        .iter()
        .map(|&p| (p - cost) * values.iter().zip(probs).filter(|(v, _)| **v >= p).map(|(_, q)| q).sum::<f64>())
        .fold(0.0, f64::max)
}

fn degenerate() -> LpProblem {
    // many rows tight at the optimum vertex (1, 1, 1)
    let mut p = LpProblem::new(3, vec![1.0, 1.0, 1.0], vec![0.0; 3], vec![5.0; 3]);
    p.push(vec![(0, 1.0), (1, 1.0)], 2.0, RowLabel::Other);
    p.push(vec![(1, 1.0), (2, 1.0)], 2.0, RowLabel::Other);
    p.push(vec![(0, 1.0), (2, 1.0)], 2.0, RowLabel::Other);
    p.push(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 3.0, RowLabel::Other);
    p.push(vec![(0, 2.0), (1, 1.0), (2, 1.0)], 4.0, RowLabel::Other);
    p
}

fn small_instance() -> DiscreteInstance {
    let types = vec![vec![0.2, 0.1], vec![0.5, 0.3], vec![0.4, 0.6], vec![0.9, 0.2], vec![0.7, 0.7]];
    DiscreteInstance::new(types, vec![0.2; 5], Setting::MultiOutcome, 0.0, CostForm::Max).unwrap()
}

#[test]
fn lp_toy_matches_vertices() {
    let mut p = LpProblem::new(2, vec![3.0, 2.0], vec![0.0; 2], vec![10.0; 2]);
    p.push(vec![(0, 1.0), (1, 1.0)], 4.0, RowLabel::Other);
    p.push(vec![(0, 1.0), (1, 3.0)], 6.0, RowLabel::Other);
    let s = solve_lp(&p, &LpOptions::default()).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!((s.objective - vertex_max(&p).unwrap()).abs() < 1e-12);
    assert!(s.duality_gap.abs() < 1e-9 && s.primal_residual < 1e-9);
}

#[test]
fn degenerate_lp_is_solved_and_deterministic() {
    let p = degenerate();
    for rule in [PivotRule::Dantzig, PivotRule::Bland] {
        let opts = LpOptions { rule, record_trace: true, ..LpOptions::default() };
        let a = solve_lp(&p, &opts).unwrap();
        let b = solve_lp(&p, &opts).unwrap();
        assert_eq!(a.status, LpStatus::Optimal);
        assert!((a.objective - 3.0).abs() < 1e-12);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.y, b.y);
    }
}

#[test]
fn infeasible_and_iteration_limits() {
    let mut p = LpProblem::new(1, vec![1.0], vec![0.0], vec![5.0]);
    p.push(vec![(0, -1.0)], -3.0, RowLabel::Other);
    p.push(vec![(0, 1.0)], 2.0, RowLabel::Other);
    assert_eq!(solve_lp(&p, &LpOptions::default()).unwrap().status, LpStatus::Infeasible);
    let capped = LpOptions { max_iter: 0, ..LpOptions::default() };
    let s = solve_lp(&degenerate(), &capped).unwrap();
    assert_ne!(s.status, LpStatus::Optimal);
}

#[test]
fn malformed_lp_rejected() {
    let mut p = LpProblem::new(2, vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2]);
    p.push(vec![(3, 1.0)], 1.0, RowLabel::Other);
    assert!(solve_lp(&p, &LpOptions::default()).is_err());
    let p = LpProblem::new(2, vec![1.0], vec![0.0; 2], vec![1.0; 2]);
    assert!(solve_lp(&p, &LpOptions::default()).is_err());
}

#[test]
fn single_type_is_fully_extracted() {
    let inst = DiscreteInstance::new(vec![vec![0.6, 0.3]], vec![1.0], Setting::MultiOutcome, 0.1, CostForm::Max).unwrap();
    let sol = solve_optimal_mechanism(&inst).unwrap();
    assert!((sol.objective - 0.5).abs() < 1e-10);
    assert!((sol.x[0][0] - 1.0).abs() < 1e-10);
    let (gap, _) = revenue_gap(&inst, 1e-6).unwrap();
    assert!(gap.absolute_gap.abs() < 1e-10);
    assert!(!gap.lottery_support);
}

#[test]
fn one_item_optimum_is_a_posted_price() {
    let values = [1.0, 2.0, 3.0, 5.0];
    let probs = [0.4, 0.3, 0.2, 0.1];
    let inst = DiscreteInstance::new(values.iter().map(|v| vec![*v]).collect(), probs.to_vec(), Setting::MultiProduct, 0.0, CostForm::Sum).unwrap();
    let sol = solve_optimal_mechanism(&inst).unwrap();
    assert!((sol.objective - best_posted(&values, &probs, 0.0)).abs() < 1e-9);
    assert!(!sol.has_lottery(1e-6));
}

#[test]
fn lp_solution_is_incentive_compatible() {
    let inst = small_instance();
    let sol = solve_optimal_mechanism(&inst).unwrap();
    let r = verify_ic(&sol, &inst);
    assert!(r.ic_residual <= 1e-8 && r.ir_residual <= 1e-8 && r.feasibility_residual <= 1e-8);
    assert!(r.sum_line_residual.is_none());
    assert!((sol.revenue(&inst) - sol.objective).abs() < 1e-12);
}

#[test]
fn seeded_violation_is_located() {
    let inst = small_instance();
    let mut sol = solve_optimal_mechanism(&inst).unwrap();
    let s = (0..inst.k()).max_by(|&a, &b| sol.p[a].total_cmp(&sol.p[b])).unwrap();
    sol.p[s] = 0.0;
    let r = verify_ic(&sol, &inst);
    assert!(r.ic_residual > 0.1);
    assert_eq!(r.worst_pair.unwrap().1, s);
}

#[test]
fn null_mechanism_has_no_violation() {
    let inst = small_instance();
    let sol = MechanismSolution { x: vec![vec![0.0; 2]; 5], p: vec![0.0; 5], objective: 0.0, ic_residual: 0.0, ir_residual: 0.0, duals: None };
    let r = verify_ic(&sol, &inst);
    assert_eq!((r.ic_residual, r.ir_residual, r.feasibility_residual), (0.0, 0.0, 0.0));
    assert_eq!(r.worst_pair, None);
}

#[test]
fn overfull_lottery_is_infeasible() {
    let inst = small_instance();
    let mut sol = solve_optimal_mechanism(&inst).unwrap();
    sol.x[0] = vec![0.8, 0.8];
    assert!(verify_ic(&sol, &inst).feasibility_residual > 0.5);
}

#[test]
fn simplex_bundle_respects_sum_lines() {
    let inst = read_instance(&golden("simplex_bundle.json")).unwrap();
    let sol = solve_optimal_mechanism(&inst).unwrap();
    let r = verify_ic(&sol, &inst);
    assert!(r.sum_line_residual.unwrap() <= 1e-8);
    assert!(r.ic_residual <= 1e-8);
}

#[test]
fn restricted_families_match_threshold_pricing() {
    let inst = small_instance();
    let u = solve_restricted(&inst, &RestrictedFamily::UniformPrice).unwrap();
    let fav: Vec<f64> = inst.types.iter().map(|t| t.iter().cloned().fold(0.0, f64::max)).collect();
    assert!((u.objective - best_posted(&fav, &inst.probs, 0.0)).abs() < 1e-12);
    assert!(solve_restricted(&inst, &RestrictedFamily::BundlePrice).is_err());

    let bundle = DiscreteInstance::new(inst.types.clone(), inst.probs.clone(), Setting::MultiProduct, 0.0, CostForm::Sum).unwrap();
    let b = solve_restricted(&bundle, &RestrictedFamily::BundlePrice).unwrap();
    let sums: Vec<f64> = inst.types.iter().map(|t| t.iter().sum()).collect();
    assert!((b.objective - best_posted(&sums, &inst.probs, 0.0)).abs() < 1e-12);

    let menu = MenuMechanism {
        options: vec![MenuOption { allocation: vec![1.0, 0.0], price: 0.45 }, MenuOption { allocation: vec![0.5, 0.5], price: 0.3 }],
    };
    let g = solve_restricted(&inst, &RestrictedFamily::GivenMenu(menu)).unwrap();
    assert!(g.ic_residual <= 1e-12);
    let opt = solve_optimal_mechanism(&inst).unwrap();
    assert!(opt.objective >= g.objective - 1e-9 && opt.objective >= u.objective - 1e-9);
}

#[test]
fn instance_and_solution_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = read_instance(&golden("iid_uniform_01.json")).unwrap();
    let path = dir.path().join("inst.json");
    write_instance(&inst, &path).unwrap();
    assert_eq!(read_instance(&path).unwrap(), inst);
    let sol = solve_optimal_mechanism(&inst).unwrap();
    let csv = dir.path().join("sol.csv");
    write_solution_csv(&inst, &sol, &csv).unwrap();
    let (x, p) = read_solution_csv(&inst, &csv).unwrap();
    assert_eq!(x, sol.x);
    assert_eq!(p, sol.p);
}

#[test]
fn bad_instances_rejected() {
    assert!(DiscreteInstance::new(vec![vec![0.5]], vec![0.7], Setting::MultiOutcome, 0.0, CostForm::Max).is_err());
    assert!(DiscreteInstance::new(vec![vec![0.5], vec![0.2, 0.1]], vec![0.5; 2], Setting::MultiOutcome, 0.0, CostForm::Max).is_err());
    let big = vec![vec![0.5]; MAX_TYPES + 1];
    let n = big.len() as f64;
    let big = DiscreteInstance::new(big, vec![1.0 / n; MAX_TYPES + 1], Setting::MultiOutcome, 0.0, CostForm::Max).unwrap();
    assert!(solve_optimal_mechanism(&big).is_err());
    let g = build_grid(&FamilySpec::IidUniform { a: 0.0, b: 1.0 }, (33, 33)).unwrap();
    assert!(discretize(&g, 15, Setting::MultiOutcome, 0.0, CostForm::Max).is_err());
    assert!(discretize(&g, MAX_TYPES + 1, Setting::MultiOutcome, 0.0, CostForm::Max).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"types\": [[1.0]]}").unwrap();
    assert!(read_instance(&path).is_err());
}

#[test]
fn discretization_preserves_mass() {
    let g = build_grid(&FamilySpec::IidUniform { a: 0.0, b: 1.0 }, (65, 65)).unwrap();
    let inst = discretize(&g, 100, Setting::MultiOutcome, 0.0, CostForm::Max).unwrap();
    assert!((inst.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(inst.k() <= 100);
    assert_eq!(inst.mesh.as_ref().unwrap().layout, MeshLayout::FavoriteLattice);
}

fn lp_strategy() -> impl Strategy<Value = LpProblem> {
    (
        prop::collection::vec(-1.0f64..1.0, 3),
        prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 3), 0.1f64..2.0), 1..5),
    )
        .prop_map(|(c, rows)| {
            let mut p = LpProblem::new(3, c, vec![0.0; 3], vec![1.5; 3]);
            for (a, b) in rows {
                p.push(a.into_iter().enumerate().collect(), b, RowLabel::Other);
            }
            p
        })
}

fn instance_strategy() -> impl Strategy<Value = DiscreteInstance> {
    prop::collection::vec((prop::collection::vec(0.0f64..1.0, 2), 0.1f64..1.0), 2..7).prop_map(|ts| {
        let z: f64 = ts.iter().map(|t| t.1).sum();
        let types = ts.iter().map(|t| t.0.clone()).collect();
        let probs = ts.iter().map(|t| t.1 / z).collect();
        DiscreteInstance::new(types, probs, Setting::MultiOutcome, 0.0, CostForm::Max).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simplex_matches_vertex_enumeration(p in lp_strategy()) {
        // the origin is feasible since every rhs is positive
        let s = solve_lp(&p, &LpOptions::default()).unwrap();
        prop_assert_eq!(s.status, LpStatus::Optimal);
        let want = vertex_max(&p).unwrap();
        prop_assert!((s.objective - want).abs() < 1e-8, "{} vs {}", s.objective, want);
        let bland = solve_lp(&p, &LpOptions { rule: PivotRule::Bland, ..LpOptions::default() }).unwrap();
        prop_assert!((bland.objective - want).abs() < 1e-8);
    }

    #[test]
    fn optimum_dominates_simple_mechanisms(inst in instance_strategy(), price in 0.0f64..1.0) {
        let opt = solve_optimal_mechanism(&inst).unwrap();
        prop_assert!(opt.ic_residual <= 1e-8);
        let u = solve_restricted(&inst, &RestrictedFamily::UniformPrice).unwrap();
        prop_assert!(opt.objective >= u.objective - 1e-9);
        let menu = MenuMechanism::uniform_price(price, 2);
        let g = solve_restricted(&inst, &RestrictedFamily::GivenMenu(menu)).unwrap();
        prop_assert!(opt.objective >= g.objective - 1e-9);
    }

    #[test]
    fn scaling_values_scales_profit(inst in instance_strategy(), s in 0.5f64..4.0) {
        let a = solve_optimal_mechanism(&inst).unwrap();
        let b = solve_optimal_mechanism(&inst.scaled(s)).unwrap();
        prop_assert!((b.objective - s * a.objective).abs() < 1e-8 * (1.0 + s));
    }

    #[test]
    fn one_item_lp_equals_best_posted_price(vals in prop::collection::vec((0.0f64..3.0, 0.1f64..1.0), 1..8), cost in 0.0f64..1.0) {
        let z: f64 = vals.iter().map(|v| v.1).sum();
        let values: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let probs: Vec<f64> = vals.iter().map(|v| v.1 / z).collect();
        let inst = DiscreteInstance::new(values.iter().map(|v| vec![*v]).collect(), probs.clone(), Setting::MultiProduct, cost, CostForm::Sum).unwrap();
        let sol = solve_optimal_mechanism(&inst).unwrap();
        prop_assert!((sol.objective - best_posted(&values, &probs, cost)).abs() < 1e-8);
    }
}
