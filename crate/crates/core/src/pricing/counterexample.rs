//! Menus that beat uniform or grand-bundle pricing on perfectly correlated
//! instances whose ratio moves the wrong way.

use serde::{Deserialize, Serialize};

use super::menu::{path_revenue, MenuMechanism, MenuOption};
use crate::dist::{CurveSamples, FamilySpec, MarginalSpec};
use crate::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub epsilon: f64,
    pub gain: f64,
    /// `f_max(p) * epsilon * p`.
    pub leading_order: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub spec: FamilySpec,
    pub menu: MenuMechanism,
    pub price: f64,
    pub epsilon: f64,
    pub uniform_revenue: f64,
    pub menu_revenue: f64,
    pub gain: f64,
    pub ladder: Vec<LadderPoint>,
}

/// Number of rungs `epsilon = 2^-k p`, `k = 1..=LADDER`.
const LADDER: i32 = 24;

fn check_range(curve: &CurveSamples, hi: f64) -> Result<()> {
    let (a, b) = curve.range();
    if a > 1e-12 || b < hi - 1e-12 {
        return invalid(format!("curve must cover [0, {hi}], covers [{a}, {b}]"));
    }
    Ok(())
}

/// Given a curve whose ratio `C(t1) / t1` strictly decreases at `p`, pairs
/// the perfectly correlated instance with favorite value `U[0, 2p]` (whose
/// monopoly price is `p`) and the menu `{(1,0) at p, (0,1) at C(p) - eps}`,
/// with `eps` maximizing the exact revenue gain over `2^-k p`.
pub fn construct_counterexample(curve: &CurveSamples, p: f64) -> Result<Counterexample> {
    curve.validate()?;
    curve.check_below_diagonal()?;
    if !(p.is_finite() && p > 0.0) {
        return invalid("price point must be positive");
    }
    check_range(curve, 2.0 * p)?;
    let d = 1e-6 * p;
    if !(curve.ratio(p + d) < curve.ratio(p - d)) {
        return invalid(format!("C(t1)/t1 is not strictly decreasing at p = {p}"));
    }
    let marginal = MarginalSpec::Uniform { lo: 0.0, hi: 2.0 * p };
    let path = |v: f64| vec![v, curve.eval(v)];
    let cdf = |v: f64| marginal.cdf(v);
    let mut knots = curve.xs();
    knots.push(p);
    let eval = |menu: &MenuMechanism| path_revenue(menu, &path, &cdf, (0.0, 2.0 * p), &knots, 0.0);
    let uniform = MenuMechanism::uniform_price(p, 2);
    let base = eval(&uniform);
    let cp = curve.eval(p);
    let fmax = marginal.pdf(p);
    let menu_at = |eps: f64| MenuMechanism {
        options: vec![
            MenuOption { allocation: vec![1.0, 0.0], price: p },
            MenuOption { allocation: vec![0.0, 1.0], price: cp - eps },
        ],
    };
    let mut ladder = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 1..=LADDER {
        let eps = p * 2f64.powi(-k);
        if cp - eps <= 0.0 {
            continue;
        }
        let r = eval(&menu_at(eps));
        let gain = r - base;
        ladder.push(LadderPoint { epsilon: eps, gain, leading_order: fmax * eps * p });
        if best.map_or(true, |(_, g, _)| gain > g) {
            best = Some((eps, gain, r));
        }
    }
    let (epsilon, gain, menu_revenue) = best.ok_or_else(|| Error::Degenerate("C(p) is too small for any discount".into()))?;
    if !(gain > 0.0) {
        return Err(Error::Degenerate(format!("no discount improved revenue (best gain {gain:.3e})")));
    }
    Ok(Counterexample {
        spec: FamilySpec::PerfectlyCorrelated { marginal, curve: curve.clone() },
        menu: menu_at(epsilon),
        price: p,
        epsilon,
        uniform_revenue: base,
        menu_revenue,
        gain,
        ladder,
    })
}

/// Least-squares slope of `ln gain` against `ln epsilon` over the `n`
/// smallest rungs with positive gain.
pub fn loglog_slope(ladder: &[LadderPoint], n: usize) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = ladder.iter().filter(|l| l.gain > 0.0).map(|l| (l.epsilon.ln(), l.gain.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.truncate(n);
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / k, pts.iter().map(|p| p.1).sum::<f64>() / k);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditiveCounterexample {
    /// Distribution of the bundle value `s`.
    pub sum_marginal: MarginalSpec,
    /// Ratio `theta(s) = min / max` along the instance.
    pub ratio_curve: CurveSamples,
    pub menu: MenuMechanism,
    pub bundle_price: f64,
    pub bundle_revenue: f64,
    pub menu_revenue: f64,
    pub gain: f64,
    pub epsilon: f64,
}

/// Additive analogue: types `t(s) = (s, s theta(s)) / (1 + theta(s))` with
/// `s ~ U[0, 2 s0]`. When `theta` increases at `s0`, searches item-price
/// options added to the bundle at `s0` for a strict improvement.
pub fn construct_additive_counterexample(ratio_curve: &CurveSamples, s0: f64) -> Result<AdditiveCounterexample> {
    ratio_curve.validate()?;
    if !(s0.is_finite() && s0 > 0.0) {
        return invalid("bundle price point must be positive");
    }
    check_range(ratio_curve, 2.0 * s0)?;
    if ratio_curve.ys().iter().any(|t| !(*t >= 0.0 && *t <= 1.0)) {
        return invalid("ratio samples must lie in [0, 1]");
    }
    let d = 1e-6 * s0;
    if !(ratio_curve.eval(s0 + d) > ratio_curve.eval(s0 - d)) {
        return invalid(format!("theta(s) is not strictly increasing at s = {s0}"));
    }
    let marginal = MarginalSpec::Uniform { lo: 0.0, hi: 2.0 * s0 };
    let path = |s: f64| {
        let th = ratio_curve.eval(s);
        vec![s / (1.0 + th), s * th / (1.0 + th)]
    };
    let cdf = |s: f64| marginal.cdf(s);
    let mut knots = ratio_curve.xs();
    knots.push(s0);
    let eval = |menu: &MenuMechanism| path_revenue(menu, &path, &cdf, (0.0, 2.0 * s0), &knots, 0.0);
    let bundle = MenuOption { allocation: vec![1.0, 1.0], price: s0 };
    let base = eval(&MenuMechanism { options: vec![bundle.clone()] });
    let t0 = path(s0);
    let mut best: Option<(MenuMechanism, f64, f64, f64)> = None;
    for k in 1..=LADDER {
        let eps = s0 * 2f64.powi(-k);
        for item in 0..2 {
            for sign in [-1.0, 1.0] {
                let price = t0[item] + sign * eps;
                if price <= 0.0 {
                    continue;
                }
                let mut a = vec![0.0; 2];
                a[item] = 1.0;
                let menu = MenuMechanism { options: vec![bundle.clone(), MenuOption { allocation: a, price }] };
                let r = eval(&menu);
                if best.as_ref().map_or(true, |b| r - base > b.2) {
                    best = Some((menu, r, r - base, eps));
                }
            }
        }
    }
    match best {
        Some((menu, r, gain, eps)) if gain > 0.0 => Ok(AdditiveCounterexample {
            sum_marginal: marginal,
            ratio_curve: ratio_curve.clone(),
            menu,
            bundle_price: s0,
            bundle_revenue: base,
            menu_revenue: r,
            gain,
            epsilon: eps,
        }),
        _ => Err(Error::Degenerate("no improving item-price menu found".into())),
    }
}
