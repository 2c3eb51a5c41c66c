//! Ironed extension in quantile space for favorite marginals that are not
//! regular.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{point_column, VerifyOptions, VerifyReport};
use crate::dist::{quantile_map, MaxRatioGrid};
use crate::numeric::{concave_iron, gradient, linspace};
use crate::report::CheckResult;
use crate::{Error, Result};

/// Ironed virtual values on a `(q1, q2)` lattice, where `q1 = 1 - F_max(t1)`
/// runs upward (favorite value downward) and `q2 = 1 - F(theta | t1)`.
/// Two-dimensional arrays are row-major `[i * n_q2 + r]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IronedField {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi1_bar: Vec<f64>,
    pub phi2: Vec<f64>,
    pub phi2_bar: Vec<f64>,
    /// Slope `d t2 / d t1` along the curve of constant `q2`.
    pub mu: Vec<f64>,
    /// `int_{q1}^{1} (phi1_bar - phi1)`.
    pub correction: Vec<f64>,
    /// `q1` intervals where ironing pooled the virtual value.
    pub ironed_intervals: Vec<(f64, f64)>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl IronedField {
    pub fn n_q2(&self) -> usize {
        self.q2.len()
    }

    /// Ironed favorite virtual value at favorite value `v`.
    pub fn phi1_bar_at(&self, v: f64) -> f64 {
        let xs: Vec<f64> = self.t1.iter().rev().cloned().collect();
        let ys: Vec<f64> = self.phi1_bar.iter().rev().cloned().collect();
        crate::numeric::interp(&xs, &ys, v)
    }
}

pub fn build_ironed_quantile(grid: &MaxRatioGrid) -> Result<IronedField> {
    let g = &grid.grid;
    let qm = quantile_map(grid)?;
    if let Some(j) = qm.noninvertible_columns.first() {
        return Err(Error::Degenerate(format!("conditional ratio CDF is not invertible at v = {}", g.anchor[*j])));
    }
    let na = g.n_anchor();
    let nq2 = g.n_ratio();
    let q2 = linspace(0.0, 1.0, nq2);
    let cdf = g.marg_cdf();
    let curve = grid.band_curve();

    // t2 on every column usable for slopes, at each q2 level
    let usable: Vec<usize> = (0..na).filter(|j| !g.is_degenerate(*j) || point_column(g, *j)).collect();
    let at = |j: usize, r: usize| -> f64 {
        let v = g.anchor[j];
        match &curve {
            Some(c) => c.eval(v),
            None => v * g.inverse_cond(j, 1.0 - q2[r]),
        }
    };
    let ua: Vec<f64> = usable.iter().map(|j| g.anchor[*j]).collect();
    let mut mu_col = vec![vec![f64::NAN; nq2]; na];
    let mut dmu_col = vec![vec![f64::NAN; nq2]; na];
    if ua.len() < 2 {
        return Err(Error::Degenerate("fewer than two usable columns".into()));
    }
    for r in 0..nq2 {
        let ys: Vec<f64> = usable.iter().map(|j| at(*j, r)).collect();
        let m = gradient(&ua, &ys);
        let dm = gradient(&ua, &m);
        for (n, j) in usable.iter().enumerate() {
            mu_col[*j][r] = m[n];
            dmu_col[*j][r] = dm[n];
        }
    }

    // nodes in increasing q1
    let js: Vec<usize> = (0..na).rev().filter(|j| !g.is_degenerate(*j)).collect();
    let n = js.len();
    let q1: Vec<f64> = js.iter().map(|j| 1.0 - cdf[*j]).collect();
    let t1: Vec<f64> = js.iter().map(|j| g.anchor[*j]).collect();
    let rev: Vec<f64> = js.iter().map(|j| (1.0 - cdf[*j]).max(0.0) / g.col_mass(*j)).collect();
    let phi1: Vec<f64> = (0..n).map(|i| t1[i] - rev[i]).collect();
    // revenue curve q1 t1(q1), whose derivative is phi1
    let revenue: Vec<f64> = (0..n).map(|i| q1[i] * t1[i]).collect();
    let ironing = concave_iron(&q1, &revenue, &phi1);
    let phi1_bar = ironing.slope;
    let d: Vec<f64> = (0..n).map(|i| phi1_bar[i] - phi1[i]).collect();
    // int_{q1}^{1} (phi1_bar - phi1) equals minus the majorant's lift
    let correction: Vec<f64> = ironing.gap.iter().map(|g| -g).collect();

    let mut t2 = vec![0.0; n * nq2];
    let mut mu = vec![0.0; n * nq2];
    let mut phi2 = vec![0.0; n * nq2];
    let mut phi2_bar = vec![0.0; n * nq2];
    for (i, j) in js.iter().enumerate() {
        let f = g.col_mass(*j);
        for r in 0..nq2 {
            let m = mu_col[*j][r];
            let dm_dq1 = dmu_col[*j][r] / (-f);
            let x = i * nq2 + r;
            t2[x] = at(*j, r);
            mu[x] = m;
            phi2[x] = t2[x] - rev[i] * m;
            phi2_bar[x] = phi2[x] + d[i] * m - correction[i] * dm_dq1;
        }
    }

    let mut diagnostics = BTreeMap::new();
    // the majorant's increment over [0, 1] against the revenue curve's
    let lift = |i: usize| revenue[i] - correction[i];
    diagnostics.insert("integral_change".into(), ((lift(n - 1) - lift(0)) - (revenue[n - 1] - revenue[0])).abs());
    diagnostics.insert("max_ironing".into(), d.iter().fold(0.0, |m, x| m.max(x.abs())));
    let ironed_intervals = ironing.pooled.iter().map(|(s, e)| (q1[*s], q1[*e])).filter(|(a, b)| b > a).collect();
    Ok(IronedField { q1, q2, t1, t2, phi1, phi1_bar, phi2, phi2_bar, mu, correction, ironed_intervals, diagnostics })
}

/// `theta * phi1_bar >= phi2_bar` and `phi1_bar <= t1` at every node.
pub fn verify_ironed_dominance(ironed: &IronedField, opts: &VerifyOptions) -> VerifyReport {
    let nq2 = ironed.n_q2();
    let scale = ironed.t1.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let tol = opts.tol * scale;
    let mut dom = (f64::INFINITY, None);
    let mut below = (f64::INFINITY, None);
    for i in 0..ironed.t1.len() {
        let t1 = ironed.t1[i];
        let m = t1 - ironed.phi1_bar[i];
        if m < below.0 {
            below = (m, Some(i * nq2));
        }
        if t1 <= 0.0 {
            continue;
        }
        for r in 0..nq2 {
            let x = i * nq2 + r;
            let theta = ironed.t2[x] / t1;
            let m = theta * ironed.phi1_bar[i] - ironed.phi2_bar[x];
            if m.is_finite() && m < dom.0 {
                dom = (m, Some(x));
            }
        }
    }
    let point = |x: usize| vec![ironed.t1[x / nq2], ironed.t2[x]];
    let mk = |name: &str, (m, at): (f64, Option<usize>)| match at {
        Some(x) if m < -tol => CheckResult::fail(name, m, "t1,t2", point(x), vec![ironed.q1[x / nq2], ironed.q2[x % nq2]], m)
            .note("second witness point is (q1, q2)"),
        _ => CheckResult::pass(name, if m.is_finite() { m } else { 0.0 }, "t1,t2"),
    };
    let checks = vec![mk("dominance", dom), mk("phi1_below_t1", below)];
    let mut stats = ironed.diagnostics.clone();
    stats.insert("min_dominance_margin".into(), dom.0);
    VerifyReport::new("ironed_dominance", checks, stats, Vec::new())
}
