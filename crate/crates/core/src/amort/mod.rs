//! Amortizations of revenue: vector fields `lambda` with virtual values
//! `phi = t - lambda / f`, their constructions on ratio grids, and numerical
//! verification of the divergence, boundary, tangency and pointwise
//! optimization properties.

mod discrete;
mod extension;
mod geom;
mod io;
mod ironing;
mod sum;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use discrete::{discrete_amortization, DiscreteAmortization, FlowKind};
pub use extension::{build_extension_2d, verify_boundary, verify_divergence, verify_tangency, verify_vsm_uniform, ExtensionMethod};
pub use geom::FieldGeometry;
pub use io::{write_field_csv, write_field_json, write_ironed_csv};
pub use ironing::{build_ironed_quantile, verify_ironed_dominance, IronedField};
pub use sum::{build_sum_canonical, build_sum_extension, verify_shift_condition, verify_vsm_bundle};

use crate::dist::{MaxRatioGrid, QuantileCurves, RatioGrid};
use crate::numeric::gradient;
use crate::report::CheckResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Extension2dFormula,
    Extension2dIntegrated,
    SumExtension,
    SumCanonical,
    IronedQuantile,
}

/// Vector field `lambda` and virtual values `phi` on the nodes of a grid's
/// favorite-1 branch. Nodes of columns without mass carry `NaN` virtual
/// values, zero `lambda`, and are listed in `flagged`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmortizationField {
    pub construction: Construction,
    pub geometry: FieldGeometry,
    pub lambda: Vec<[f64; 2]>,
    pub phi: Vec<[f64; 2]>,
    /// Unit tangent of the equi-quantile curve through each node.
    pub tangent: Vec<[f64; 2]>,
    pub flagged: Vec<usize>,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl AmortizationField {
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.geometry.pos
    }

    /// Expected virtual surplus `E[x(t) . phi(t)]` of a symmetric allocation
    /// given on the favorite-1 branch.
    pub fn virtual_surplus(&self, alloc: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for (i, t) in self.geometry.pos.iter().enumerate() {
            let m = self.geometry.mass[i];
            if m == 0.0 {
                continue;
            }
            let x = alloc(*t);
            let p = self.phi[i];
            if p[0].is_finite() && p[1].is_finite() {
                acc += m * (x[0] * p[0] + x[1] * p[1]);
            }
        }
        acc
    }

    /// Largest `|phi_i - (t_i - lambda_i / f)|` over nodes with `f > 1e-12`.
    pub fn identity_error(&self) -> f64 {
        let g = &self.geometry;
        let mut worst: f64 = 0.0;
        for i in 0..g.pos.len() {
            let f = g.dens[i];
            if f <= 1e-12 || self.flagged.binary_search(&i).is_ok() {
                continue;
            }
            for c in 0..2 {
                let d = (self.phi[i][c] - (g.pos[i][c] - self.lambda[i][c] / f)).abs();
                worst = worst.max(d / (1.0 + g.pos[i][c].abs()));
            }
        }
        worst
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Constant `C` of `C * h` tolerances.
    pub c_const: f64,
    /// Relative tolerance for exact identities.
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { c_const: 5.0, tol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub stats: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl VerifyReport {
    pub(crate) fn new(name: &str, checks: Vec<CheckResult>, stats: BTreeMap<String, f64>, notes: Vec<String>) -> Self {
        let passed = checks.iter().all(|c| c.verdict != crate::report::Verdict::Fail);
        VerifyReport { name: name.into(), passed, checks, stats, notes }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn stat(&self, name: &str) -> f64 {
        self.stats.get(name).copied().unwrap_or(f64::NAN)
    }
}

/// Columns whose nodes all map to one point (usable for curve slopes).
fn point_column(g: &RatioGrid, j: usize) -> bool {
    g.anchor[j] * (g.theta_hi[j] - g.theta_lo[j]) <= 1e-14 * g.scale.max(1e-300)
}

/// Slope `d t2 / d anchor` of the equi-quantile curve through every node.
/// Curve-supported families use their exact curve.
pub(crate) fn quantile_slopes<G: QuantileCurves>(grid: &G) -> Vec<f64> {
    let g = grid.ratio_grid();
    let (na, nu) = (g.n_anchor(), g.n_ratio());
    if let Some(curve) = grid.exact_curve() {
        let ys: Vec<f64> = g.anchor.iter().map(|a| curve.eval(*a)).collect();
        let d = gradient(&g.anchor, &ys);
        return (0..na * nu).map(|i| d[i / nu]).collect();
    }
    let usable: Vec<bool> = (0..na).map(|j| !g.is_degenerate(j) || point_column(g, j)).collect();
    let mut out = vec![f64::NAN; na * nu];
    for j in 0..na {
        if g.is_degenerate(j) {
            continue;
        }
        let cdf = g.cdf_column(j);
        for k in 0..nu {
            let q = cdf[k];
            let at = |c: usize| grid.second(g.anchor[c], g.inverse_cond(c, q));
            let left = j > 0 && usable[j - 1];
            let right = j + 1 < na && usable[j + 1];
            out[j * nu + k] = match (left, right) {
                (true, true) => (at(j + 1) - at(j - 1)) / (g.anchor[j + 1] - g.anchor[j - 1]),
                (false, true) => (at(j + 1) - at(j)) / (g.anchor[j + 1] - g.anchor[j]),
                (true, false) => (at(j) - at(j - 1)) / (g.anchor[j] - g.anchor[j - 1]),
                (false, false) => f64::NAN,
            };
        }
    }
    out
}

pub(crate) fn max_geometry(grid: &MaxRatioGrid) -> FieldGeometry {
    FieldGeometry::new(&grid.grid, |v, th| [v, v * th], |j, k| grid.cartesian_density(j, k))
}

fn unit(v: [f64; 2]) -> [f64; 2] {
    let n = v[0].hypot(v[1]);
    if n > 0.0 && n.is_finite() {
        [v[0] / n, v[1] / n]
    } else {
        [f64::NAN, f64::NAN]
    }
}
