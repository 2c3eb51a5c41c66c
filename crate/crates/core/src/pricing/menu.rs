//! Menus of (allocation, price) options and their exact revenue.

use serde::{Deserialize, Serialize};

use crate::dist::{conditional_ratio_cdf, MaxRatioGrid};
use crate::numeric::linspace;
use crate::oracle::Setting;
use crate::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MenuOption {
    pub allocation: Vec<f64>,
    pub price: f64,
}

/// Options offered to the agent; the null option `(0, 0)` is implicit.
/// Indifferent types take the highest-priced option.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MenuMechanism {
    pub options: Vec<MenuOption>,
}

impl MenuMechanism {
    /// Every outcome at one price.
    pub fn uniform_price(p: f64, m: usize) -> Self {
        let options = (0..m)
            .map(|i| {
                let mut a = vec![0.0; m];
                a[i] = 1.0;
                MenuOption { allocation: a, price: p }
            })
            .collect();
        MenuMechanism { options }
    }

    pub fn validate(&self, setting: Setting, m: usize) -> Result<()> {
        for (n, o) in self.options.iter().enumerate() {
            if o.allocation.len() != m {
                return invalid(format!("option {n} has {} entries, expected {m}", o.allocation.len()));
            }
            if !o.price.is_finite() || o.allocation.iter().any(|x| !(*x >= -1e-12 && *x <= 1.0 + 1e-12)) {
                return invalid(format!("option {n} is not a finite allocation in [0, 1] with a finite price"));
            }
            if setting == Setting::MultiOutcome && o.allocation.iter().sum::<f64>() > 1.0 + 1e-12 {
                return invalid(format!("option {n} allocates more than one outcome in total"));
            }
        }
        Ok(())
    }

    /// Index of the chosen option, `None` for the null option.
    pub fn choose_index(&self, t: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_u: f64 = 0.0;
        for (i, o) in self.options.iter().enumerate() {
            let u: f64 = t.iter().zip(&o.allocation).map(|(a, b)| a * b).sum::<f64>() - o.price;
            let tol = 1e-12 * (1.0 + u.abs().max(best_u.abs()));
            let better = u > best_u + tol || ((u - best_u).abs() <= tol && best.map_or(o.price > 0.0, |(_, p)| o.price > p));
            if better {
                best = Some((i, o.price));
                best_u = u;
            }
        }
        best.map(|(i, _)| i)
    }

    /// Chosen allocation and price.
    pub fn choose(&self, t: &[f64]) -> (Vec<f64>, f64) {
        match self.choose_index(t) {
            Some(i) => (self.options[i].allocation.clone(), self.options[i].price),
            None => (vec![0.0; t.len()], 0.0),
        }
    }

    fn profit(&self, choice: Option<usize>, cost: f64) -> f64 {
        choice.map_or(0.0, |i| {
            let o = &self.options[i];
            o.price - cost * o.allocation.iter().sum::<f64>()
        })
    }
}

/// Expected `price - c * sum(allocation)` over a one-parameter family of
/// types `path(s)`, with `s` distributed by `cdf` on `[lo, hi]`. Choice
/// switches are located by bisection, so the result is exact up to the CDF.
pub fn path_revenue(menu: &MenuMechanism, path: &dyn Fn(f64) -> Vec<f64>, cdf: &dyn Fn(f64) -> f64, range: (f64, f64), knots: &[f64], cost: f64) -> f64 {
    let (lo, hi) = range;
    let mut pts = linspace(lo, hi, 2049);
    pts.extend(knots.iter().cloned().filter(|k| *k > lo && *k < hi));
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let choice = |s: f64| menu.choose_index(&path(s));
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += segment(menu, &choice, cdf, w[0], w[1], cost, 0);
    }
    total
}

fn segment(menu: &MenuMechanism, choice: &dyn Fn(f64) -> Option<usize>, cdf: &dyn Fn(f64) -> f64, a: f64, b: f64, cost: f64, depth: usize) -> f64 {
    let eps = (b - a) * 1e-9;
    let (ca, cb) = (choice(a + eps), choice(b - eps));
    if ca == cb || depth > 12 {
        return menu.profit(ca, cost) * (cdf(b) - cdf(a));
    }
    // locate a switch point and recurse on both sides
    let mut l = a + eps;
    let mut r = b - eps;
    for _ in 0..80 {
        let mid = 0.5 * (l + r);
        if choice(mid) == ca {
            l = mid;
        } else {
            r = mid;
        }
    }
    let x = 0.5 * (l + r);
    segment(menu, choice, cdf, a, x, cost, depth + 1) + segment(menu, choice, cdf, x, b, cost, depth + 1)
}

/// Expected profit of a menu on a two-outcome unit-demand grid, with cost
/// `c` per unit of allocation. The favorite value is integrated on a fine
/// partition; the ratio exactly over the envelope of option utilities.
pub fn menu_revenue(menu: &MenuMechanism, grid: &MaxRatioGrid, c: f64) -> Result<f64> {
    menu.validate(Setting::MultiOutcome, 2)?;
    let g = &grid.grid;
    let na = g.n_anchor();
    let (vlo, vhi) = (g.anchor[0], g.anchor[na - 1]);
    let marg = g.marginal();
    let mut knots: Vec<f64> = g.anchor.clone();
    for o in &menu.options {
        knots.push(o.price);
        for q in &menu.options {
            knots.push((o.price - q.price).abs());
        }
    }
    if let Some(curve) = grid.band_curve() {
        let path = |v: f64| vec![v, curve.eval(v)];
        let cdf = |v: f64| marg.cdf_at(v);
        knots.extend(curve.xs());
        return Ok(path_revenue(menu, &path, &cdf, (vlo, vhi), &knots, c));
    }
    let mut pts = linspace(vlo, vhi, 8 * (na - 1) + 1);
    pts.extend(knots.into_iter().filter(|k| *k > vlo && *k < vhi));
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let mass = marg.cdf_at(w[1]) - marg.cdf_at(w[0]);
        if mass <= 0.0 {
            continue;
        }
        let v = 0.5 * (w[0] + w[1]);
        for (b, wt) in g.branch_weights.iter().enumerate() {
            if *wt == 0.0 {
                continue;
            }
            let Ok(cond) = conditional_ratio_cdf(grid, v, b) else {
                continue;
            };
            let j = crate::numeric::bracket(&g.anchor, v);
            let lo = g.theta_lo[j].min(g.theta_lo[j + 1]);
            let hi = g.theta_hi[j].max(g.theta_hi[j + 1]);
            let point = |th: f64| if b == 0 { vec![v, v * th] } else { vec![v * th, v] };
            let mut brk = vec![lo, hi];
            // utility of option o at ratio th is linear in th
            let lines: Vec<(f64, f64)> = std::iter::once((0.0, 0.0))
                .chain(menu.options.iter().map(|o| {
                    let (a0, a1) = (point(0.0), point(1.0));
                    let u0: f64 = a0.iter().zip(&o.allocation).map(|(x, y)| x * y).sum::<f64>() - o.price;
                    let u1: f64 = a1.iter().zip(&o.allocation).map(|(x, y)| x * y).sum::<f64>() - o.price;
                    (u0, u1 - u0)
                }))
                .collect();
            for (i, l1) in lines.iter().enumerate() {
                for l2 in &lines[i + 1..] {
                    let ds = l1.1 - l2.1;
                    if ds.abs() > 1e-300 {
                        let th = (l2.0 - l1.0) / ds;
                        if th > lo && th < hi {
                            brk.push(th);
                        }
                    }
                }
            }
            brk.sort_by(|a, b| a.total_cmp(b));
            let mut inner = 0.0;
            for s in brk.windows(2) {
                let dm = cond.eval(s[1]) - cond.eval(s[0]);
                if dm > 0.0 {
                    inner += dm * menu.profit(menu.choose_index(&point(0.5 * (s[0] + s[1]))), c);
                }
            }
            // mass sitting exactly at the bottom of the range
            let base = cond.eval(lo);
            if base > 0.0 {
                inner += base * menu.profit(menu.choose_index(&point(lo)), c);
            }
            total += wt * mass * inner;
        }
    }
    Ok(total)
}

