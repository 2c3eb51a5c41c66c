//! Dual simplex for `max c.y` subject to `A y <= b` and finite bounds on
//! every variable. The basis is a set of `n` active constraints (bound rows
//! included) with an explicit dense inverse; constraint rows are sparse.
//! Starting from the bound vertex favoured by the objective makes the first
//! basis dual feasible, so no phase one is needed.

use serde::{Deserialize, Serialize};

use crate::{invalid, Result};

/// What a constraint row encodes, for diagnostics and dual reporting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowLabel {
    /// Type `t` does not gain by reporting `t_hat`.
    Ic { t: usize, t_hat: usize },
    Ir { t: usize },
    Feasibility { t: usize },
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub n_vars: usize,
    /// Sparse rows `(column, coefficient)`.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub labels: Vec<RowLabel>,
}

impl LpProblem {
    pub fn new(n_vars: usize, objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        LpProblem { n_vars, rows: Vec::new(), rhs: Vec::new(), objective, lower, upper, labels: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64, label: RowLabel) {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.labels.push(label);
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_vars;
        if self.objective.len() != n || self.lower.len() != n || self.upper.len() != n {
            return invalid("objective and bounds must have one entry per variable");
        }
        if self.rows.len() != self.rhs.len() || self.rows.len() != self.labels.len() {
            return invalid("rows, right-hand sides and labels differ in length");
        }
        for i in 0..n {
            if !(self.lower[i].is_finite() && self.upper[i].is_finite() && self.lower[i] <= self.upper[i]) {
                return invalid(format!("variable {i} needs finite bounds lower <= upper"));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.iter().any(|(c, v)| *c >= n || !v.is_finite()) || !self.rhs[r].is_finite() {
                return invalid(format!("row {r} is malformed"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PivotRule {
    /// Most violated row, switching to Bland's rule during long degenerate
    /// stretches.
    Dantzig,
    /// Lowest-index violated row and lowest-index leaving row throughout.
    Bland,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOptions {
    pub rule: PivotRule,
    pub max_iter: usize,
    pub record_trace: bool,
    /// Consecutive degenerate pivots before the Dantzig rule falls back to
    /// Bland's rule.
    pub degenerate_switch: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { rule: PivotRule::Dantzig, max_iter: 200_000, record_trace: false, degenerate_switch: 50 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub y: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the constraint rows (zero for non-basic rows).
    pub duals: Vec<f64>,
    /// Multipliers of the upper and lower bound of each variable.
    pub bound_duals: Vec<[f64; 2]>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    /// Rough condition estimate `||B||_1 ||B^-1||_1` of the final basis.
    pub condition: f64,
    /// `(entering, leaving)` extended row indices per pivot when recorded.
    /// Bound rows are numbered after the constraint rows: `m + 2i` upper,
    /// `m + 2i + 1` lower.
    pub trace: Vec<(usize, usize)>,
}

struct Solver<'a> {
    p: &'a LpProblem,
    n: usize,
    m: usize,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Row-major inverse of the basis matrix whose rows are the active rows.
    binv: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    norms: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn row(&self, r: usize) -> RowRef<'a> {
        if r < self.m {
            RowRef::Sparse(&self.p.rows[r])
        } else {
            let i = (r - self.m) / 2;
            if (r - self.m) % 2 == 0 {
                RowRef::Unit(i, 1.0)
            } else {
                RowRef::Unit(i, -1.0)
            }
        }
    }

    fn rhs(&self, r: usize) -> f64 {
        if r < self.m {
            self.p.rhs[r]
        } else {
            let i = (r - self.m) / 2;
            if (r - self.m) % 2 == 0 {
                self.p.upper[i]
            } else {
                -self.p.lower[i]
            }
        }
    }

    fn dot(&self, r: usize, v: &[f64]) -> f64 {
        match self.row(r) {
            RowRef::Sparse(row) => row.iter().map(|(c, a)| a * v[*c]).sum(),
            RowRef::Unit(i, s) => s * v[i],
        }
    }

    /// `d = B^-T a_r`, so that `a_r = sum_i d_i a_{basis[i]}`.
    fn btran(&self, r: usize) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n];
        let mut add = |c: usize, a: f64| {
            let src = &self.binv[c * n..(c + 1) * n];
            for (x, b) in d.iter_mut().zip(src) {
                *x += a * b;
            }
        };
        match self.row(r) {
            RowRef::Sparse(row) => row.iter().for_each(|(c, a)| add(*c, *a)),
            RowRef::Unit(i, s) => add(i, s),
        }
        d
    }

    fn dense_basis(&self) -> Vec<f64> {
        let n = self.n;
        let mut b = vec![0.0; n * n];
        for (i, r) in self.basis.iter().enumerate() {
            match self.row(*r) {
                RowRef::Sparse(row) => row.iter().for_each(|(c, a)| b[i * n + c] += a),
                RowRef::Unit(c, s) => b[i * n + c] = s,
            }
        }
        b
    }

    /// Recomputes the inverse, the vertex and the multipliers from scratch.
    fn refactor(&mut self) -> bool {
        let n = self.n;
        let Some(inv) = invert(self.dense_basis(), n) else {
            return false;
        };
        self.binv = inv;
        let bb: Vec<f64> = self.basis.iter().map(|r| self.rhs(*r)).collect();
        for c in 0..n {
            self.y[c] = (0..n).map(|i| self.binv[c * n + i] * bb[i]).sum();
        }
        for i in 0..n {
            self.w[i] = (0..n).map(|c| self.binv[c * n + i] * self.p.objective[c]).sum();
        }
        true
    }

    fn violation(&self, r: usize) -> f64 {
        (self.dot(r, &self.y) - self.rhs(r)) / self.norms[r]
    }
}

enum RowRef<'a> {
    Sparse(&'a [(usize, f64)]),
    Unit(usize, f64),
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(mut a: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|x, y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))?;
        let pv = a[piv * n + col];
        if pv.abs() < 1e-13 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
                inv.swap(piv * n + c, col * n + c);
            }
        }
        let s = 1.0 / pv;
        for c in 0..n {
            a[col * n + c] *= s;
            inv[col * n + c] *= s;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                a[r * n + c] -= f * a[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    Some(inv)
}

fn norm1_cols(a: &[f64], n: usize) -> f64 {
    (0..n).map(|c| (0..n).map(|r| a[r * n + c].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Solves the problem; deterministic for identical input and options.
pub fn solve_lp(prob: &LpProblem, opts: &LpOptions) -> Result<LpSolution> {
    prob.validate()?;
    let n = prob.n_vars;
    let m = prob.rows.len();
    let total = m + 2 * n;
    let mut norms: Vec<f64> = prob.rows.iter().map(|r| r.iter().map(|(_, a)| a * a).sum::<f64>().sqrt().max(1e-300)).collect();
    norms.extend(std::iter::repeat(1.0).take(2 * n));
    // bound vertex favoured by the objective
    let basis: Vec<usize> = (0..n).map(|i| if prob.objective[i] > 0.0 { m + 2 * i } else { m + 2 * i + 1 }).collect();
    let mut in_basis = vec![false; total];
    let mut binv = vec![0.0; n * n];
    let mut y = vec![0.0; n];
    let mut w = vec![0.0; n];
    for (i, r) in basis.iter().enumerate() {
        in_basis[*r] = true;
        let upper = (r - m) % 2 == 0;
        binv[i * n + i] = if upper { 1.0 } else { -1.0 };
        y[i] = if upper { prob.upper[i] } else { prob.lower[i] };
        w[i] = prob.objective[i].abs();
    }
    let mut s = Solver { p: prob, n, m, basis, in_basis, binv, y, w, norms };
    let scale = prob.rhs.iter().chain(&prob.upper).chain(&prob.lower).fold(1.0_f64, |a, b| a.max(b.abs()));
    let feas_tol = 1e-10 * scale;
    let cscale = prob.objective.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(1e-300);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut degenerate_run = 0usize;
    let mut status = LpStatus::IterationLimit;
    while iterations < opts.max_iter {
        let bland = opts.rule == PivotRule::Bland || degenerate_run >= opts.degenerate_switch;
        // entering row
        let mut enter = None;
        let mut best = feas_tol;
        for r in 0..total {
            if s.in_basis[r] {
                continue;
            }
            let v = s.violation(r);
            if v > best {
                enter = Some(r);
                if bland {
                    break;
                }
                best = v;
            }
        }
        let Some(r) = enter else {
            status = LpStatus::Optimal;
            break;
        };
        let d = s.btran(r);
        let dmax = d.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let piv_tol = 1e-9 * dmax.max(1e-300);
        // Harris two-pass ratio test: bound the step with a small dual
        // tolerance, then take the largest pivot among rows within the bound
        let dual_tol = 1e-11 * cscale;
        let mut bound = f64::INFINITY;
        for i in 0..n {
            if d[i] > piv_tol {
                bound = bound.min((s.w[i].max(0.0) + dual_tol) / d[i]);
            }
        }
        let mut leave: Option<usize> = None;
        let mut dbest = 0.0_f64;
        for i in 0..n {
            if d[i] > piv_tol && s.w[i].max(0.0) / d[i] <= bound {
                dbest = dbest.max(d[i]);
            }
        }
        for i in 0..n {
            if d[i] <= piv_tol || s.w[i].max(0.0) / d[i] > bound {
                continue;
            }
            let better = match leave {
                None => !bland || d[i] >= 1e-3 * dbest,
                Some(l) if bland => d[i] >= 1e-3 * dbest && s.basis[i] < s.basis[l],
                Some(l) => d[i] > d[l],
            };
            if better {
                leave = Some(i);
            }
        }
        let Some(li) = leave else {
            status = LpStatus::Infeasible;
            break;
        };
        if opts.record_trace {
            trace.push((r, s.basis[li]));
        }
        let step = s.w[li].max(0.0) / d[li];
        if step <= 1e-14 * cscale {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        for i in 0..n {
            s.w[i] -= step * d[i];
        }
        s.w[li] = step;
        // B'^-1 = B^-1 E^-1: column li scaled by 1/d_li, others eliminated
        let dl = d[li];
        for row in s.binv.chunks_mut(n) {
            let t = row[li] / dl;
            if t != 0.0 {
                for (x, dj) in row.iter_mut().zip(&d) {
                    *x -= dj * t;
                }
            }
            row[li] = t;
        }
        s.in_basis[s.basis[li]] = false;
        s.in_basis[r] = true;
        s.basis[li] = r;
        let delta = s.rhs(r) - s.dot(r, &s.y);
        for c in 0..n {
            s.y[c] += delta * s.binv[c * n + li];
        }
        iterations += 1;
        if iterations % 2000 == 0 && !s.refactor() {
            status = LpStatus::NumericalFailure;
            break;
        }
    }
    let mut condition = f64::NAN;
    if status == LpStatus::Optimal {
        if !s.refactor() {
            status = LpStatus::NumericalFailure;
        } else {
            condition = norm1_cols(&s.dense_basis(), n) * norm1_cols(&s.binv, n);
        }
    }
    let mut duals = vec![0.0; m];
    let mut bound_duals = vec![[0.0; 2]; n];
    for (i, r) in s.basis.iter().enumerate() {
        if *r < m {
            duals[*r] = s.w[i];
        } else {
            bound_duals[(r - m) / 2][(r - m) % 2] = s.w[i];
        }
    }
    let objective: f64 = prob.objective.iter().zip(&s.y).map(|(c, y)| c * y).sum();
    let primal_residual = (0..total).map(|r| s.dot(r, &s.y) - s.rhs(r)).fold(0.0, f64::max);
    let dual_residual = s.w.iter().fold(0.0_f64, |a, w| a.max(-w));
    let dual_obj: f64 = s.basis.iter().zip(&s.w).map(|(r, w)| s.rhs(*r) * w).sum();
    let duality_gap = (objective - dual_obj).abs() / (1.0 + objective.abs());
    if status == LpStatus::Optimal && (primal_residual > 1e-8 * scale || dual_residual > 1e-8 * cscale || duality_gap > 1e-8) {
        status = LpStatus::NumericalFailure;
    }
    Ok(LpSolution {
        status,
        y: s.y,
        objective,
        duals,
        bound_duals,
        iterations,
        primal_residual,
        dual_residual,
        duality_gap,
        condition,
        trace,
    })
}
