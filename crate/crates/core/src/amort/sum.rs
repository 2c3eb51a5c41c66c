//! Amortizations for additive settings, built on sum-ratio grids.

use std::collections::BTreeMap;

use super::{quantile_slopes, unit, AmortizationField, Construction, FieldGeometry, VerifyOptions, VerifyReport};
use crate::dist::SumRatioGrid;
use crate::report::CheckResult;
use crate::{Error, Result};

fn sum_geometry(grid: &SumRatioGrid) -> FieldGeometry {
    FieldGeometry::new(&grid.grid, |s, th| [s / (1.0 + th), s * th / (1.0 + th)], |j, k| grid.cartesian_density(j, k))
}

/// `(1 - F_sum) / f_sum` per column, after checking interior mass.
fn revenue_ratio(grid: &SumRatioGrid) -> Result<Vec<f64>> {
    let g = &grid.grid;
    let na = g.n_anchor();
    for j in 1..na - 1 {
        if g.col_mass(j) <= 0.0 {
            return Err(Error::Degenerate(format!("sum density vanishes at interior node s = {}", g.anchor[j])));
        }
    }
    let cdf = g.marg_cdf();
    Ok((0..na).map(|j| if g.col_mass(j) > 0.0 { (1.0 - cdf[j]).max(0.0) / g.col_mass(j) } else { f64::NAN }).collect())
}

fn build(grid: &SumRatioGrid, canonical: bool) -> Result<AmortizationField> {
    let rev = revenue_ratio(grid)?;
    let geo = sum_geometry(grid);
    let slopes = quantile_slopes(grid);
    let (na, nu) = (geo.n_anchor(), geo.n_ratio());
    let n = na * nu;
    let mut lambda = vec![[0.0; 2]; n];
    let mut phi = vec![[f64::NAN; 2]; n];
    let mut tangent = vec![[f64::NAN; 2]; n];
    let mut flagged = Vec::new();
    let mut sum_err: f64 = 0.0;
    for j in 0..na {
        let s = geo.anchor[j];
        for k in 0..nu {
            let i = j * nu + k;
            let c1 = slopes[i];
            let tau = [1.0 - c1, c1];
            tangent[i] = unit(tau);
            let vertical = !c1.is_finite() || c1.abs() > 1e6;
            if geo.singular[j] || s <= 0.0 || (canonical && vertical) {
                flagged.push(i);
                continue;
            }
            let t = geo.pos[i];
            let (f, r) = (geo.dens[i], rev[j]);
            let dir = if canonical { tau } else { [t[0] / s, t[1] / s] };
            lambda[i] = [f * r * dir[0], f * r * dir[1]];
            phi[i] = [t[0] - r * dir[0], t[1] - r * dir[1]];
            sum_err = sum_err.max((phi[i][0] + phi[i][1] - (s - r)).abs());
        }
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("sum_identity_error".to_string(), sum_err);
    diagnostics.insert("h".to_string(), geo.h());
    let construction = if canonical { Construction::SumCanonical } else { Construction::SumExtension };
    Ok(AmortizationField { construction, geometry: geo, lambda, phi, tangent, flagged, diagnostics, notes: Vec::new() })
}

/// Sum-of-values extension: `phi_i = (t_i / s) * phi_sum(s)`.
pub fn build_sum_extension(grid: &SumRatioGrid) -> Result<AmortizationField> {
    build(grid, false)
}

/// Canonical additive amortization: `lambda` along the unit-sum tangent of
/// the equi-quantile curve, with magnitude `f (1 - F_sum) / f_sum`.
pub fn build_sum_canonical(grid: &SumRatioGrid) -> Result<AmortizationField> {
    build(grid, true)
}

/// `t2 * lambda1 >= t1 * lambda2` at every node.
pub fn verify_shift_condition(field: &AmortizationField, opts: &VerifyOptions) -> VerifyReport {
    let geo = &field.geometry;
    let lmax = field.lambda.iter().map(|l| l[0].hypot(l[1])).fold(0.0, f64::max).max(1e-300);
    let mut worst = (f64::INFINITY, None);
    for (i, l) in field.lambda.iter().enumerate() {
        let t = geo.pos[i];
        let tn = t[0].hypot(t[1]);
        if tn == 0.0 {
            continue;
        }
        let m = (t[1] * l[0] - t[0] * l[1]) / (tn * lmax);
        if m < worst.0 {
            worst = (m, Some(i));
        }
    }
    let check = match worst {
        (m, Some(i)) if m < -opts.tol => {
            let p = geo.pos[i].to_vec();
            CheckResult::fail("shift", m, "t1,t2", p.clone(), p, m)
        }
        (m, _) => CheckResult::pass("shift", if m.is_finite() { m } else { 0.0 }, "t1,t2"),
    };
    let mut stats = BTreeMap::new();
    stats.insert("min_slack".into(), worst.0);
    VerifyReport::new("shift", vec![check], stats, Vec::new())
}

/// Pointwise optimality of bundle pricing at cost `c` for an additive
/// field. `stats["bundle_price"]` is the sum where `phi1 + phi2` crosses `c`.
pub fn verify_vsm_bundle(field: &AmortizationField, c: f64, opts: &VerifyOptions) -> VerifyReport {
    let geo = &field.geometry;
    let (na, nu) = (geo.n_anchor(), geo.n_ratio());
    let scale = geo.anchor.iter().fold(0.0_f64, |m, a| m.max(a.abs())).max(1e-300);
    let tol = opts.tol;
    let ok = |i: usize| field.phi[i][0].is_finite() && field.phi[i][1].is_finite();
    let mut checks = Vec::new();

    let mut worst = (f64::INFINITY, None);
    for i in (0..na * nu).filter(|i| ok(*i)) {
        let p = field.phi[i];
        let m = (p[0] * p[1]) / (scale * scale);
        if m < worst.0 {
            worst = (m, Some(i));
        }
    }
    checks.push(match worst {
        (m, Some(i)) if m < -tol => {
            let p = geo.pos[i].to_vec();
            CheckResult::fail("same_sign", m, "t1,t2", p.clone(), p, m)
        }
        (m, _) => CheckResult::pass("same_sign", if m.is_finite() { m } else { 0.0 }, "t1,t2"),
    });

    // column-constant sum, then monotone in s
    let mut sums: Vec<(usize, f64)> = Vec::new();
    let mut spread = CheckResult::pass("sum_depends_on_s", 0.0, "t1,t2");
    for j in 0..na {
        let col: Vec<usize> = (0..nu).map(|k| j * nu + k).filter(|i| ok(*i)).collect();
        if col.is_empty() {
            continue;
        }
        let vals: Vec<f64> = col.iter().map(|i| field.phi[*i][0] + field.phi[*i][1]).collect();
        let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let d = (hi - lo) / scale;
        if d > tol.max(1e-9) && spread.passed() {
            spread = CheckResult::fail("sum_depends_on_s", -d, "t1,t2", geo.pos[col[0]].to_vec(), geo.pos[*col.last().unwrap()].to_vec(), d);
        }
        sums.push((j, vals[0]));
    }
    checks.push(spread);
    let mut mono = CheckResult::pass("sum_monotone", 0.0, "t1,t2");
    let mut worst_drop: f64 = 0.0;
    for w in sums.windows(2) {
        let drop = (w[0].1 - w[1].1) / scale;
        if drop > tol && drop > worst_drop {
            worst_drop = drop;
            let (a, b) = (geo.pos[w[0].0 * nu].to_vec(), geo.pos[w[1].0 * nu].to_vec());
            mono = CheckResult::fail("sum_monotone", -drop, "t1,t2", a, b, w[1].1 - w[0].1);
        }
    }
    checks.push(mono);

    let mut stats = BTreeMap::new();
    let last_below = sums.iter().rposition(|(_, v)| *v < c);
    let price = match last_below {
        None => sums.first().map(|(j, _)| geo.anchor[*j]),
        Some(l) if l + 1 < sums.len() => {
            let ((j0, p0), (j1, p1)) = (sums[l], sums[l + 1]);
            let (a0, a1) = (geo.anchor[j0], geo.anchor[j1]);
            Some(a0 + (c - p0) * (a1 - a0) / (p1 - p0))
        }
        Some(_) => None,
    };
    if let Some(p) = price {
        stats.insert("bundle_price".into(), p);
    }
    VerifyReport::new("vsm_bundle", checks, stats, Vec::new())
}
