//! Two-dimensional extension of the favorite-value virtual value for
//! unit-demand settings, and its verifiers.

use std::collections::BTreeMap;

use super::{max_geometry, quantile_slopes, unit, AmortizationField, Construction, FieldGeometry, VerifyOptions, VerifyReport};
use crate::dist::MaxRatioGrid;
use crate::report::CheckResult;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtensionMethod {
    /// `lambda2 = lambda1 * (slope of the equi-quantile curve)`.
    Formula,
    /// `lambda2` from integrating the divergence equation upward from the
    /// bottom boundary.
    Integrated,
}

struct Parts {
    geo: FieldGeometry,
    slopes: Vec<f64>,
    rev: Vec<f64>,
    formula: Vec<[f64; 2]>,
    integrated: Vec<[f64; 2]>,
}

fn build_parts(grid: &MaxRatioGrid) -> Result<Parts> {
    let g = &grid.grid;
    let (na, nu) = (g.n_anchor(), g.n_ratio());
    for j in 1..na - 1 {
        if g.col_mass(j) <= 0.0 {
            return Err(Error::Degenerate(format!("favorite marginal density vanishes at interior node v = {}", g.anchor[j])));
        }
    }
    let geo = max_geometry(grid);
    let slopes = quantile_slopes(grid);
    let cdf = g.marg_cdf();
    // (1 - F_max) / f_max per column
    let rev: Vec<f64> = (0..na)
        .map(|j| if g.col_mass(j) > 0.0 { ((1.0 - cdf[j]).max(0.0)) / g.col_mass(j) } else { f64::NAN })
        .collect();
    let mut formula = vec![[0.0; 2]; na * nu];
    let mut lam1 = vec![0.0; na * nu];
    for j in 0..na {
        if geo.singular[j] {
            continue;
        }
        for k in 0..nu {
            let i = j * nu + k;
            let l1 = geo.dens[i] * rev[j];
            lam1[i] = l1;
            formula[i] = [l1, l1 * slopes[i]];
        }
    }
    let zero: Vec<[f64; 2]> = lam1.iter().map(|l| [*l, 0.0]).collect();
    let (fa, _) = geo.fluxes(&zero);
    let src = geo.sources(&fa);
    let mut integrated = vec![[0.0; 2]; na * nu];
    for j in 0..na {
        if geo.singular[j] {
            continue;
        }
        let mut psi = 0.0;
        for k in 0..nu {
            let i = j * nu + k;
            if k > 0 {
                let (a, b) = (src[i - 1].unwrap_or(0.0), src[i].unwrap_or(0.0));
                psi -= (geo.u[k] - geo.u[k - 1]) * 0.5 * (a + b);
            }
            let (da, l1) = (geo.da[i], lam1[i]);
            integrated[i] = [l1, (psi + da[1] * l1) / da[0]];
        }
    }
    Ok(Parts { geo, slopes, rev, formula, integrated })
}

fn phi_of(geo: &FieldGeometry, lambda: &[[f64; 2]], i: usize) -> [f64; 2] {
    let f = geo.dens[i];
    let t = geo.pos[i];
    if f > 1e-12 {
        [t[0] - lambda[i][0] / f, t[1] - lambda[i][1] / f]
    } else {
        [f64::NAN, f64::NAN]
    }
}

/// Two-dimensional extension on the favorite-1 branch. Both constructions
/// are computed; `diagnostics["phi2_sup_diff"]` records their largest
/// disagreement in `phi2`.
pub fn build_extension_2d(grid: &MaxRatioGrid, method: ExtensionMethod) -> Result<AmortizationField> {
    let Parts { geo, slopes, rev, formula, integrated } = build_parts(grid)?;
    let g = &grid.grid;
    let (na, nu) = (g.n_anchor(), g.n_ratio());
    let n = na * nu;
    let mut flagged = Vec::new();
    let mut phi = vec![[f64::NAN; 2]; n];
    let mut tangent = vec![[f64::NAN; 2]; n];
    let mut sup_diff: f64 = 0.0;
    let mut sup_l2: f64 = 0.0;
    let lambda = match method {
        ExtensionMethod::Formula => formula.clone(),
        ExtensionMethod::Integrated => integrated.clone(),
    };
    for j in 0..na {
        for k in 0..nu {
            let i = j * nu + k;
            tangent[i] = unit([1.0, slopes[i]]);
            if geo.singular[j] || !slopes[i].is_finite() {
                flagged.push(i);
                continue;
            }
            let t = geo.pos[i];
            let pf = [t[0] - rev[j], t[1] - rev[j] * slopes[i]];
            let pi = phi_of(&geo, &integrated, i);
            if pi[1].is_finite() {
                sup_diff = sup_diff.max((pf[1] - pi[1]).abs());
            }
            sup_l2 = sup_l2.max((formula[i][1] - integrated[i][1]).abs());
            phi[i] = match method {
                ExtensionMethod::Formula => pf,
                ExtensionMethod::Integrated => {
                    if pi[0].is_finite() {
                        pi
                    } else {
                        // zero density: lambda vanishes, phi follows the formula
                        pf
                    }
                }
            };
        }
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("phi2_sup_diff".to_string(), sup_diff);
    diagnostics.insert("lambda2_sup_diff".to_string(), sup_l2);
    diagnostics.insert("h".to_string(), geo.h());
    let mut notes = Vec::new();
    if geo.singular[0] {
        diagnostics.insert("singleton_left_boundary".to_string(), 1.0);
        notes.push(format!("left boundary v = {} is a single point; inflow there is a point mass", geo.anchor[0]));
    }
    let construction = match method {
        ExtensionMethod::Formula => Construction::Extension2dFormula,
        ExtensionMethod::Integrated => Construction::Extension2dIntegrated,
    };
    Ok(AmortizationField { construction, geometry: geo, lambda, phi, tangent, flagged, diagnostics, notes })
}

fn node_coords(field: &AmortizationField, i: usize) -> Vec<f64> {
    field.geometry.pos[i].to_vec()
}

/// Discrete divergence residual `div(lambda) + f` per cell, relative to the
/// largest `|J f|`. Passes iff the sup residual is at most `C h`.
pub fn verify_divergence(field: &AmortizationField, opts: &VerifyOptions) -> VerifyReport {
    let geo = &field.geometry;
    let res = geo.cell_residuals(&field.lambda);
    let scale = geo.source_scale();
    let h = geo.h();
    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    let mut worst = None;
    for &(j, k, r) in &res {
        let a = r.abs() / scale;
        sq += a * a;
        if a > sup || worst.is_none() {
            sup = sup.max(a);
            worst = Some((j, k));
        }
    }
    let l2 = if res.is_empty() { 0.0 } else { (sq / res.len() as f64).sqrt() };
    let bound = opts.c_const * h;
    let check = match worst {
        Some((j, k)) if sup > bound => {
            let (a, b) = (geo.idx(j, k - 1), geo.idx(j, k));
            CheckResult::fail("divergence", bound - sup, "t1,t2", node_coords(field, a), node_coords(field, b), sup)
        }
        _ => CheckResult::pass("divergence", bound - sup, "t1,t2"),
    };
    let mut stats = BTreeMap::new();
    stats.insert("sup_residual".into(), sup);
    stats.insert("l2_residual".into(), l2);
    stats.insert("h".into(), h);
    stats.insert("c_const".into(), opts.c_const);
    stats.insert("cells".into(), res.len() as f64);
    VerifyReport::new("divergence", vec![check], stats, Vec::new())
}

/// Flux through the four sides of the `(anchor, u)` lattice: zero on the
/// bottom, top and right sides (up to `C h`), inward on the left.
pub fn verify_boundary(field: &AmortizationField, opts: &VerifyOptions) -> VerifyReport {
    let geo = &field.geometry;
    let (na, nu) = (geo.n_anchor(), geo.n_ratio());
    let (fa, fu) = geo.fluxes(&field.lambda);
    let regular: Vec<usize> = (0..na).filter(|j| !geo.singular[*j]).collect();
    let flux_scale = regular
        .iter()
        .flat_map(|j| (0..nu).map(move |k| j * nu + k))
        .map(|i| fa[i].abs().max(fu[i].abs()))
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = opts.c_const * geo.h() * flux_scale;
    let mut checks = Vec::new();
    let side = |name: &str, nodes: Vec<usize>, vals: &dyn Fn(usize) -> f64, one_sided: bool| -> CheckResult {
        // margin: tol - |flux| (or tol + flux for the inflow side)
        let mut margin = f64::INFINITY;
        let mut at = None;
        for i in nodes {
            let v = vals(i);
            let m = if one_sided { tol - v } else { tol - v.abs() };
            if m < margin {
                margin = m;
                at = Some((i, v));
            }
        }
        match at {
            Some((i, v)) if margin < 0.0 => {
                let p = field.geometry.pos[i].to_vec();
                CheckResult::fail(name, margin, "t1,t2", p.clone(), p, v)
            }
            Some(_) => CheckResult::pass(name, margin, "t1,t2"),
            None => CheckResult::inconclusive(name, f64::NAN, "t1,t2", "no regular boundary nodes"),
        }
    };
    let bottom: Vec<usize> = regular.iter().map(|j| j * nu).collect();
    let top: Vec<usize> = regular.iter().map(|j| j * nu + nu - 1).collect();
    checks.push(side("boundary_bottom", bottom, &|i| fu[i], false));
    checks.push(side("boundary_top", top, &|i| fu[i], false));
    if geo.singular[na - 1] {
        checks.push(CheckResult::pass("boundary_right", 0.0, "t1,t2").note("right boundary is a single point"));
    } else {
        let right: Vec<usize> = (0..nu).map(|k| (na - 1) * nu + k).collect();
        checks.push(side("boundary_right", right, &|i| fa[i], false));
    }
    let mut notes = Vec::new();
    let mut stats = BTreeMap::new();
    stats.insert("flux_scale".into(), flux_scale);
    stats.insert("tolerance".into(), tol);
    if geo.singular[0] {
        stats.insert("singleton_left_boundary".into(), 1.0);
        notes.push("left boundary is a single point; point-mass inflow allowed".into());
        checks.push(CheckResult::pass("boundary_left", 0.0, "t1,t2").note("singleton left boundary"));
    } else {
        // outward normal points to decreasing anchor: outflow is -flux_a
        let left: Vec<usize> = (0..nu).collect();
        checks.push(side("boundary_left", left, &|i| -fa[i], true));
    }
    VerifyReport::new("boundary", checks, stats, notes)
}

/// Component of `lambda` normal to the equi-quantile tangent, relative to
/// the largest `|lambda|`. Passes iff the worst node is at most `C h`;
/// the largest angle is reported as a statistic.
pub fn verify_tangency(field: &AmortizationField, opts: &VerifyOptions) -> VerifyReport {
    let geo = &field.geometry;
    let lmax = field.lambda.iter().map(|l| l[0].hypot(l[1])).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    let mut at = None;
    let mut skipped = 0usize;
    for (i, l) in field.lambda.iter().enumerate() {
        let n = l[0].hypot(l[1]);
        let tau = field.tangent[i];
        if n <= 1e-12 * lmax.max(1e-300) || !tau[0].is_finite() || field.flagged.binary_search(&i).is_ok() {
            skipped += 1;
            continue;
        }
        // cross product relative to the largest flux, so nodes where the flux
        // vanishes do not dominate through direction noise
        let cross = l[0] * tau[1] - l[1] * tau[0];
        let dev = cross.abs() / lmax;
        let dot = l[0] * tau[0] + l[1] * tau[1];
        worst_angle = worst_angle.max(cross.abs().atan2(dot.abs()));
        if dev > worst {
            worst = dev;
            at = Some(i);
        }
    }
    let bound = opts.c_const * geo.h();
    let check = match at {
        Some(i) if worst > bound => {
            let p = geo.pos[i].to_vec();
            CheckResult::fail("tangency", bound - worst, "t1,t2", p.clone(), p, worst)
        }
        _ => CheckResult::pass("tangency", bound - worst, "t1,t2"),
    };
    let mut stats = BTreeMap::new();
    stats.insert("max_deviation".into(), worst);
    stats.insert("max_angle".into(), worst_angle);
    stats.insert("skipped_nodes".into(), skipped as f64);
    VerifyReport::new("tangency", vec![check], stats, Vec::new())
}

/// Pointwise optimality of uniform pricing at cost `c` for a unit-demand
/// field. `stats["threshold"]` is the favorite value where `phi1` crosses
/// `c` (absent when nothing is served).
pub fn verify_vsm_uniform(field: &AmortizationField, c: f64, opts: &VerifyOptions) -> VerifyReport {
    let geo = &field.geometry;
    let (na, nu) = (geo.n_anchor(), geo.n_ratio());
    let scale = geo.pos.iter().fold(0.0_f64, |m, p| m.max(p[0].abs())).max(c.abs()).max(1e-300);
    let lmax = field.lambda.iter().map(|l| l[0].hypot(l[1])).fold(0.0, f64::max).max(1e-300);
    let tol = opts.tol;
    let ok = |i: usize| field.phi[i][0].is_finite() && field.phi[i][1].is_finite();
    let mut worst = [(f64::INFINITY, None::<usize>); 3];
    for i in 0..na * nu {
        let t = geo.pos[i];
        let l = field.lambda[i];
        let tn = t[0].hypot(t[1]);
        let slack = (t[0] * l[1] - t[1] * l[0]) / (tn * lmax);
        if slack.is_finite() && slack < worst[0].0 {
            worst[0] = (slack, Some(i));
        }
        if !ok(i) {
            continue;
        }
        let p = field.phi[i];
        if p[0] >= c {
            let m = (p[0] - p[1]) / scale;
            if m < worst[1].0 {
                worst[1] = (m, Some(i));
            }
        } else {
            let m = (c - p[1]) / scale;
            if m < worst[2].0 {
                worst[2] = (m, Some(i));
            }
        }
    }
    let names = ["angle", "favorite_dominates", "second_below_cost"];
    let mut checks: Vec<CheckResult> = names
        .iter()
        .zip(worst.iter())
        .map(|(name, (m, at))| match at {
            Some(i) if *m < -tol => {
                let p = geo.pos[*i].to_vec();
                CheckResult::fail(name, *m, "t1,t2", p.clone(), p, *m)
            }
            _ => CheckResult::pass(name, if m.is_finite() { *m } else { 0.0 }, "t1,t2"),
        })
        .collect();
    // up-set: along each ratio row, once phi1 >= c it stays so
    let mut upset = CheckResult::pass("service_upset", 0.0, "t1,t2");
    'rows: for k in 0..nu {
        let mut served: Option<usize> = None;
        for j in 0..na {
            let i = j * nu + k;
            if !ok(i) {
                continue;
            }
            if field.phi[i][0] >= c {
                served.get_or_insert(i);
            } else if let Some(s) = served {
                let d = (c - field.phi[i][0]) / scale;
                if d > tol {
                    upset = CheckResult::fail("service_upset", -d, "t1,t2", geo.pos[s].to_vec(), geo.pos[i].to_vec(), field.phi[i][0]);
                    break 'rows;
                }
            }
        }
    }
    checks.push(upset);
    let mut stats = BTreeMap::new();
    if let Some(p) = threshold(field, c) {
        stats.insert("threshold".into(), p);
    }
    VerifyReport::new("vsm_uniform", checks, stats, Vec::new())
}

/// Favorite value where `phi1` on the bottom row crosses `c`.
fn threshold(field: &AmortizationField, c: f64) -> Option<f64> {
    let geo = &field.geometry;
    let nu = geo.n_ratio();
    let pts: Vec<(f64, f64)> = (0..geo.n_anchor())
        .map(|j| (geo.anchor[j], field.phi[j * nu][0]))
        .filter(|(_, p)| p.is_finite())
        .collect();
    let last = pts.iter().rposition(|(_, p)| *p < c);
    match last {
        None => pts.first().map(|(a, _)| *a),
        Some(l) if l + 1 < pts.len() => {
            let ((a0, p0), (a1, p1)) = (pts[l], pts[l + 1]);
            Some(a0 + (c - p0) * (a1 - a0) / (p1 - p0))
        }
        Some(_) => None,
    }
}
