//! Geometry of an `(anchor, u)` lattice mapped into `(t1, t2)` on the
//! favorite-1 branch, and the discrete divergence operator on it.

use serde::{Deserialize, Serialize};

use crate::dist::RatioGrid;
use crate::numeric::{gradient, trapz_weights};

/// Node positions, coordinate derivatives and densities of a field lattice.
/// Arrays are row-major `[j * nu + k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGeometry {
    pub anchor: Vec<f64>,
    pub u: Vec<f64>,
    pub pos: Vec<[f64; 2]>,
    /// `d t / d anchor` at fixed `u`.
    pub da: Vec<[f64; 2]>,
    /// `d t / d u` at fixed anchor.
    pub du: Vec<[f64; 2]>,
    /// Cartesian density `f(t1, t2)` (branch weight included).
    pub dens: Vec<f64>,
    /// Probability weight of each node; sums to 1 over the lattice.
    pub mass: Vec<f64>,
    /// Columns that collapse to a point or carry no mass.
    pub singular: Vec<bool>,
    pub branch_weight: f64,
}

impl FieldGeometry {
    pub(crate) fn new(g: &RatioGrid, pos: impl Fn(f64, f64) -> [f64; 2], dens: impl Fn(usize, usize) -> f64) -> Self {
        let (na, nu) = (g.n_anchor(), g.n_ratio());
        let mut p = vec![[0.0; 2]; na * nu];
        for j in 0..na {
            for k in 0..nu {
                p[j * nu + k] = pos(g.anchor[j], g.theta(j, k));
            }
        }
        let mut da = vec![[0.0; 2]; na * nu];
        let mut du = vec![[0.0; 2]; na * nu];
        for c in 0..2 {
            for k in 0..nu {
                let ys: Vec<f64> = (0..na).map(|j| p[j * nu + k][c]).collect();
                for (j, d) in gradient(&g.anchor, &ys).into_iter().enumerate() {
                    da[j * nu + k][c] = d;
                }
            }
            for j in 0..na {
                let ys: Vec<f64> = (0..nu).map(|k| p[j * nu + k][c]).collect();
                for (k, d) in gradient(&g.u, &ys).into_iter().enumerate() {
                    du[j * nu + k][c] = d;
                }
            }
        }
        let wa = trapz_weights(&g.anchor);
        let wu = trapz_weights(&g.u);
        let mut f = vec![0.0; na * nu];
        let mut mass = vec![0.0; na * nu];
        for j in 0..na {
            for k in 0..nu {
                f[j * nu + k] = dens(j, k);
                mass[j * nu + k] = wa[j] * wu[k] * (g.theta_hi[j] - g.theta_lo[j]) * g.dens(j, k);
            }
        }
        let span = p.iter().fold(0.0_f64, |m, q| m.max(q[0].abs()).max(q[1].abs())).max(1e-300);
        let singular = (0..na)
            .map(|j| {
                let flat = (0..nu).all(|k| {
                    let i = j * nu + k;
                    (da[i][0] * du[i][1] - da[i][1] * du[i][0]).abs() <= 1e-12 * span
                });
                flat || g.is_degenerate(j)
            })
            .collect();
        FieldGeometry { anchor: g.anchor.clone(), u: g.u.clone(), pos: p, da, du, dens: f, mass, singular, branch_weight: g.branch_weights[0] }
    }

    pub fn n_anchor(&self) -> usize {
        self.anchor.len()
    }

    pub fn n_ratio(&self) -> usize {
        self.u.len()
    }

    pub fn idx(&self, j: usize, k: usize) -> usize {
        j * self.u.len() + k
    }

    pub fn jacobian(&self, i: usize) -> f64 {
        self.da[i][0] * self.du[i][1] - self.da[i][1] * self.du[i][0]
    }

    /// Grid step relative to the anchor range.
    pub fn h(&self) -> f64 {
        let n = self.anchor.len();
        let range = self.anchor[n - 1] - self.anchor[0];
        self.anchor.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max) / range.max(1e-300)
    }

    /// Anchor and ratio fluxes `J * (contravariant components)` of a
    /// Cartesian field; well defined where the Jacobian vanishes.
    pub fn fluxes(&self, lambda: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
        let mut fa = vec![0.0; lambda.len()];
        let mut fu = vec![0.0; lambda.len()];
        for i in 0..lambda.len() {
            let (a, u, l) = (self.da[i], self.du[i], lambda[i]);
            fa[i] = u[1] * l[0] - u[0] * l[1];
            fu[i] = -a[1] * l[0] + a[0] * l[1];
        }
        (fa, fu)
    }

    /// Anchor derivative of a node quantity at `(j, k)`, centred when both
    /// neighbours are regular and one-sided otherwise.
    pub fn d_anchor(&self, vals: &[f64], j: usize, k: usize) -> Option<f64> {
        let n = self.anchor.len();
        let ok = |c: usize| !self.singular[c];
        let v = |c: usize| vals[self.idx(c, k)];
        let left = j > 0 && ok(j - 1);
        let right = j + 1 < n && ok(j + 1);
        match (left, right) {
            (true, true) => Some((v(j + 1) - v(j - 1)) / (self.anchor[j + 1] - self.anchor[j - 1])),
            (false, true) => Some((v(j + 1) - v(j)) / (self.anchor[j + 1] - self.anchor[j])),
            (true, false) => Some((v(j) - v(j - 1)) / (self.anchor[j] - self.anchor[j - 1])),
            (false, false) => None,
        }
    }

    /// Source term `d_a(flux_a) + J f` on every node of regular columns.
    pub(crate) fn sources(&self, fa: &[f64]) -> Vec<Option<f64>> {
        let (na, nu) = (self.n_anchor(), self.n_ratio());
        let mut out = vec![None; na * nu];
        for j in 0..na {
            if self.singular[j] {
                continue;
            }
            for k in 0..nu {
                let i = self.idx(j, k);
                out[i] = self.d_anchor(fa, j, k).map(|d| d + self.jacobian(i) * self.dens[i]);
            }
        }
        out
    }

    /// Cell residuals of `div(lambda) + f` in the `(anchor, u)` volume form:
    /// `(j, k, r)` for the cell between ratio nodes `k - 1` and `k`.
    pub fn cell_residuals(&self, lambda: &[[f64; 2]]) -> Vec<(usize, usize, f64)> {
        let (fa, fu) = self.fluxes(lambda);
        let src = self.sources(&fa);
        let mut out = Vec::new();
        for j in 0..self.n_anchor() {
            for k in 1..self.n_ratio() {
                let (a, b) = (self.idx(j, k - 1), self.idx(j, k));
                if let (Some(sa), Some(sb)) = (src[a], src[b]) {
                    let r = (fu[b] - fu[a]) / (self.u[k] - self.u[k - 1]) + 0.5 * (sa + sb);
                    out.push((j, k, r));
                }
            }
        }
        out
    }

    /// Largest `|J f|`, the natural scale of the residuals.
    pub fn source_scale(&self) -> f64 {
        (0..self.pos.len())
            .filter(|i| !self.singular[i / self.n_ratio()])
            .map(|i| (self.jacobian(i) * self.dens[i]).abs())
            .fold(0.0, f64::max)
            .max(1e-300)
    }
}
