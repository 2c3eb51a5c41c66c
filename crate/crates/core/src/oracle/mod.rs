//! Exact optimal mechanisms on finite type sets by linear programming, with
//! restricted (simple-mechanism) optima and gap reports.

mod io;
mod lp;

use serde::{Deserialize, Serialize};

pub use io::{read_instance, read_solution_csv, write_instance, write_solution_csv};
pub use lp::{solve_lp, LpOptions, LpProblem, LpSolution, LpStatus, PivotRule, RowLabel};

use crate::dist::MaxRatioGrid;
use crate::pricing::MenuMechanism;
use crate::{invalid, Error, Result};

/// Largest instance the oracle accepts.
pub const MAX_TYPES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    /// Lotteries over outcomes: `sum_i x_i <= 1`.
    MultiOutcome,
    /// Independent items: `x in [0, 1]^m`.
    MultiProduct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostForm {
    Sum,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshLayout {
    /// Favorite value rounded down to a lattice, ratio bins inside each
    /// level, one branch per favorite outcome.
    FavoriteLattice,
    /// Bundle value rounded down to a lattice, share bins inside each level.
    SumLattice,
    /// Samples along a curve, ordered by the first coordinate.
    Curve,
}

/// Cell structure of a discretized instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub layout: MeshLayout,
    /// Lowest anchor level and lattice step.
    pub origin: f64,
    pub h: f64,
    /// `[level, branch, bin]` of every type; levels count up from `origin`.
    pub cells: Vec<[usize; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub types: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub setting: Setting,
    pub cost: f64,
    pub cost_form: CostForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<Mesh>,
}

impl DiscreteInstance {
    pub fn new(types: Vec<Vec<f64>>, probs: Vec<f64>, setting: Setting, cost: f64, cost_form: CostForm) -> Result<Self> {
        let inst = DiscreteInstance { types, probs, setting, cost, cost_form, mesh: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.types.len();
        if k == 0 {
            return invalid("instance has no types");
        }
        if self.probs.len() != k {
            return invalid(format!("{} types but {} probabilities", k, self.probs.len()));
        }
        let m = self.types[0].len();
        if m == 0 || self.types.iter().any(|t| t.len() != m || t.iter().any(|v| !v.is_finite())) {
            return invalid("types must be finite vectors of one common length");
        }
        if self.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("probabilities must be non-negative");
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        if !self.cost.is_finite() {
            return invalid("cost must be finite");
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.types.len()
    }

    pub fn m(&self) -> usize {
        self.types[0].len()
    }

    /// Largest coordinate magnitude (at least 1e-300).
    pub fn scale(&self) -> f64 {
        self.types.iter().flatten().fold(0.0_f64, |a, b| a.max(b.abs())).max(self.cost.abs()).max(1e-300)
    }

    pub fn cost_of(&self, x: &[f64]) -> f64 {
        match self.cost_form {
            CostForm::Sum => self.cost * x.iter().sum::<f64>(),
            CostForm::Max => self.cost * x.iter().cloned().fold(0.0, f64::max),
        }
    }

    /// Expected `p - cost(x)`.
    pub fn profit(&self, x: &[Vec<f64>], p: &[f64]) -> f64 {
        (0..self.k()).map(|t| self.probs[t] * (p[t] - self.cost_of(&x[t]))).sum()
    }

    /// Same instance with every value and the cost multiplied by `s`.
    pub fn scaled(&self, s: f64) -> DiscreteInstance {
        let mut out = self.clone();
        out.types.iter_mut().flatten().for_each(|v| *v *= s);
        out.cost *= s;
        if let Some(mesh) = &mut out.mesh {
            mesh.origin *= s;
            mesh.h *= s;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSolution {
    pub x: Vec<Vec<f64>>,
    pub p: Vec<f64>,
    /// Expected profit.
    pub objective: f64,
    pub ic_residual: f64,
    pub ir_residual: f64,
    /// Multipliers of the IC rows as `(t, t_hat, value)`, nonzero only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duals: Option<Vec<(usize, usize, f64)>>,
}

impl MechanismSolution {
    fn from_parts(inst: &DiscreteInstance, x: Vec<Vec<f64>>, p: Vec<f64>) -> Self {
        let objective = inst.profit(&x, &p);
        let mut sol = MechanismSolution { x, p, objective, ic_residual: 0.0, ir_residual: 0.0, duals: None };
        let r = verify_ic(&sol, inst);
        sol.ic_residual = r.ic_residual;
        sol.ir_residual = r.ir_residual;
        sol
    }

    /// True when some allocation component lies in `(tol, 1 - tol)`.
    pub fn has_lottery(&self, tol: f64) -> bool {
        self.x.iter().flatten().any(|v| *v > tol && *v < 1.0 - tol)
    }

    pub fn revenue(&self, inst: &DiscreteInstance) -> f64 {
        self.p.iter().zip(&inst.probs).map(|(p, q)| p * q).sum()
    }
}

/// Discretization of a grid's distribution with about `k_target` types.
///
/// The anchor of the setting's simple price (favorite value for
/// `multi_outcome`, bundle value for `multi_product`) is rounded down to a
/// lattice, so a uniform or bundle price at a lattice level sells to exactly
/// the continuous mass above it. Rounding is radial: a type keeps the mean
/// ratio (or share) of its bin, so it may sit below the support by less
/// than one lattice step. Curve-supported families become samples
/// along the curve at the lattice levels.
pub fn discretize(grid: &MaxRatioGrid, k_target: usize, setting: Setting, cost: f64, cost_form: CostForm) -> Result<DiscreteInstance> {
    if k_target < 16 {
        return invalid(format!("k_target must be at least 16, got {k_target}"));
    }
    if k_target > MAX_TYPES {
        return invalid(format!("k_target must be at most {MAX_TYPES}, got {k_target}"));
    }
    let g = &grid.grid;
    let v = &g.anchor;
    let (vlo, vhi) = (v[0], v[v.len() - 1]);
    if let Some(curve) = grid.band_curve() {
        let n = k_target;
        let h = (vhi - vlo) / n as f64;
        let marg = g.marginal();
        let mut types = Vec::new();
        let mut probs = Vec::new();
        let mut cells = Vec::new();
        for i in 0..n {
            let (a, b) = (vlo + i as f64 * h, vlo + (i + 1) as f64 * h);
            let mass = marg.cdf_at(b) - marg.cdf_at(a);
            if mass > 0.0 {
                types.push(vec![a, curve.eval(a).min(a)]);
                probs.push(mass);
                cells.push([i, 0, 0]);
            }
        }
        normalize(&mut probs)?;
        let mut inst = DiscreteInstance::new(types, probs, setting, cost, cost_form)?;
        inst.mesh = Some(Mesh { layout: MeshLayout::Curve, origin: vlo, h, cells });
        return Ok(inst);
    }
    let layout = match setting {
        Setting::MultiOutcome => MeshLayout::FavoriteLattice,
        Setting::MultiProduct => MeshLayout::SumLattice,
    };
    let frame = LatticeFrame::new(grid, layout);
    let upper = (2.0 * (k_target as f64).sqrt()).ceil() as usize + 4;
    let mut best: Option<(usize, usize)> = None;
    for n in 2..=upper {
        let count = frame.cells(n).len();
        if count > MAX_TYPES {
            break;
        }
        let gap = count.abs_diff(k_target);
        if best.map_or(true, |(_, bg)| gap < bg) {
            best = Some((n, gap));
        }
    }
    let (n, _) = best.ok_or_else(|| Error::InvalidInput("no lattice fits the type budget".into()))?;
    let mut types = Vec::new();
    let mut probs = Vec::new();
    let mut cells = Vec::new();
    for (t, p, c) in frame.cells(n) {
        types.push(t);
        probs.push(p);
        cells.push(c);
    }
    normalize(&mut probs)?;
    let mut inst = DiscreteInstance::new(types, probs, setting, cost, cost_form)?;
    inst.mesh = Some(Mesh { layout, origin: frame.lo, h: (frame.hi - frame.lo) / n as f64, cells });
    Ok(inst)
}

/// Anchor and ratio ranges of a lattice over the grid's support.
struct LatticeFrame<'a> {
    grid: &'a MaxRatioGrid,
    layout: MeshLayout,
    lo: f64,
    hi: f64,
    /// Range of `t2 / t1` (favorite lattice, branch 1) or of `t2 / (t1 + t2)`
    /// (sum lattice).
    r_lo: f64,
    r_hi: f64,
}

impl<'a> LatticeFrame<'a> {
    fn new(grid: &'a MaxRatioGrid, layout: MeshLayout) -> Self {
        let g = &grid.grid;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut r_lo, mut r_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..g.n_anchor() {
            for k in 0..g.n_ratio() {
                let th = g.theta(j, k);
                let a = g.anchor[j];
                let (anchor, r) = match layout {
                    MeshLayout::SumLattice => (a * (1.0 + th), th / (1.0 + th)),
                    _ => (a, th),
                };
                lo = lo.min(anchor);
                hi = hi.max(anchor);
                r_lo = r_lo.min(r);
                r_hi = r_hi.max(r);
            }
        }
        if layout == MeshLayout::SumLattice {
            // shares of the mirrored branch
            r_hi = 1.0 - r_lo;
        }
        if !(r_hi > r_lo) {
            r_hi = r_lo + 1e-9;
        }
        LatticeFrame { grid, layout, lo, hi, r_lo, r_hi }
    }

    /// Non-empty cells of an `n`-level lattice with `ceil(n / 2)` bins per
    /// level: `(type, mass, [level, branch, bin])`.
    fn cells(&self, n: usize) -> Vec<(Vec<f64>, f64, [usize; 3])> {
        const SUB: usize = 4;
        let nb = n.div_ceil(2);
        let h = (self.hi - self.lo) / n as f64;
        let hr = (self.r_hi - self.r_lo) / nb as f64;
        let branches = if self.layout == MeshLayout::FavoriteLattice { 2 } else { 1 };
        let mut out = Vec::new();
        for i in 0..n {
            let level = self.lo + i as f64 * h;
            for br in 0..branches {
                for b in 0..nb {
                    let (mut mass, mut moment) = (0.0, 0.0);
                    for sa in 0..SUB {
                        let a = level + (sa as f64 + 0.5) / SUB as f64 * h;
                        for sr in 0..SUB {
                            let r = self.r_lo + (b as f64 + (sr as f64 + 0.5) / SUB as f64) * hr;
                            let (t, jac) = match self.layout {
                                MeshLayout::SumLattice => ([a * (1.0 - r), a * r], a),
                                _ if br == 0 => ([a, a * r], a),
                                _ => ([a * r, a], a),
                            };
                            let w = self.grid.cartesian_density_at(t[0], t[1]) * jac;
                            mass += w;
                            moment += w * r;
                        }
                    }
                    if mass > 0.0 {
                        let r = moment / mass;
                        let t = match self.layout {
                            MeshLayout::SumLattice => vec![level * (1.0 - r), level * r],
                            _ if br == 0 => vec![level, level * r],
                            _ => vec![level * r, level],
                        };
                        out.push((t, mass * h * hr / (SUB * SUB) as f64, [i, br, b]));
                    }
                }
            }
        }
        out
    }
}

fn normalize(p: &mut [f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonNormalizable("discretized masses sum to zero".into()));
    }
    p.iter_mut().for_each(|x| *x /= total);
    // absorb rounding so the sum is 1 to machine precision
    let drift: f64 = 1.0 - p.iter().sum::<f64>();
    if let Some(big) = p.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *big += drift;
    }
    Ok(())
}

/// Variable layout of the mechanism LP.
struct Layout {
    k: usize,
    m: usize,
    with_z: bool,
}

impl Layout {
    fn x(&self, t: usize, i: usize) -> usize {
        t * self.m + i
    }
    fn p(&self, t: usize) -> usize {
        self.k * self.m + t
    }
    fn z(&self, t: usize) -> usize {
        self.k * (self.m + 1) + t
    }
    fn n(&self) -> usize {
        self.k * (self.m + 1) + if self.with_z { self.k } else { 0 }
    }
}

/// The mechanism LP with objective weights `x_weight` on allocations
/// (added to the cost term) and the instance probabilities on payments.
fn mechanism_lp(inst: &DiscreteInstance, x_weight: Option<&[Vec<f64>]>) -> (LpProblem, Layout) {
    let (k, m) = (inst.k(), inst.m());
    let with_z = inst.cost_form == CostForm::Max && inst.cost != 0.0 && m > 1;
    let lay = Layout { k, m, with_z };
    let n = lay.n();
    let pmax = inst.types.iter().map(|t| t.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max).max(1e-300);
    let mut obj = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![1.0; n];
    for t in 0..k {
        for i in 0..m {
            let mut c = if inst.cost_form == CostForm::Sum || m == 1 { -inst.cost * inst.probs[t] } else { 0.0 };
            if let Some(w) = x_weight {
                c += w[t][i];
            }
            obj[lay.x(t, i)] = c;
        }
        obj[lay.p(t)] = inst.probs[t];
        lower[lay.p(t)] = -pmax;
        upper[lay.p(t)] = pmax;
        if with_z {
            obj[lay.z(t)] = -inst.cost * inst.probs[t];
        }
    }
    let mut lp = LpProblem::new(n, obj, lower, upper);
    for t in 0..k {
        for th in 0..k {
            if th == t {
                continue;
            }
            // t.x(th) - p(th) - t.x(t) + p(t) <= 0
            let mut row = Vec::with_capacity(2 * m + 2);
            for i in 0..m {
                row.push((lay.x(th, i), inst.types[t][i]));
                row.push((lay.x(t, i), -inst.types[t][i]));
            }
            row.push((lay.p(th), -1.0));
            row.push((lay.p(t), 1.0));
            lp.push(row, 0.0, RowLabel::Ic { t, t_hat: th });
        }
    }
    for t in 0..k {
        let mut row: Vec<(usize, f64)> = (0..m).map(|i| (lay.x(t, i), -inst.types[t][i])).collect();
        row.push((lay.p(t), 1.0));
        lp.push(row, 0.0, RowLabel::Ir { t });
    }
    for t in 0..k {
        if inst.setting == Setting::MultiOutcome {
            lp.push((0..m).map(|i| (lay.x(t, i), 1.0)).collect(), 1.0, RowLabel::Feasibility { t });
        }
        if with_z {
            for i in 0..m {
                lp.push(vec![(lay.x(t, i), 1.0), (lay.z(t), -1.0)], 0.0, RowLabel::Feasibility { t });
            }
        }
    }
    (lp, lay)
}

fn solve_mechanism(inst: &DiscreteInstance, x_weight: Option<&[Vec<f64>]>) -> Result<MechanismSolution> {
    inst.validate()?;
    if inst.k() > MAX_TYPES {
        return invalid(format!("{} types exceed the oracle limit of {MAX_TYPES}", inst.k()));
    }
    let (lp, lay) = mechanism_lp(inst, x_weight);
    let sol = solve_lp(&lp, &LpOptions::default())?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Solver("mechanism LP reported infeasible; the null mechanism is feasible, so this is a bug".into())),
        LpStatus::IterationLimit => return Err(Error::Solver(format!("iteration limit after {} pivots", sol.iterations))),
        LpStatus::NumericalFailure => {
            return Err(Error::Solver(format!(
                "numerical failure: residual {:.3e}, gap {:.3e}, condition estimate {:.3e}",
                sol.primal_residual, sol.duality_gap, sol.condition
            )))
        }
    }
    let (k, m) = (lay.k, lay.m);
    let x: Vec<Vec<f64>> = (0..k).map(|t| (0..m).map(|i| sol.y[lay.x(t, i)].clamp(0.0, 1.0)).collect()).collect();
    let p: Vec<f64> = (0..k).map(|t| sol.y[lay.p(t)]).collect();
    let mut out = MechanismSolution::from_parts(inst, x, p);
    let duals = lp
        .labels
        .iter()
        .zip(&sol.duals)
        .filter_map(|(l, d)| match l {
            RowLabel::Ic { t, t_hat } if *d > 0.0 => Some((*t, *t_hat, *d)),
            _ => None,
        })
        .collect();
    out.duals = Some(duals);
    Ok(out)
}

/// Revenue-optimal mechanism over all IC and IR mechanisms on the instance.
pub fn solve_optimal_mechanism(inst: &DiscreteInstance) -> Result<MechanismSolution> {
    solve_mechanism(inst, None)
}

/// Optimum of the mechanism LP with `weights[t][i]` added to the objective
/// coefficient of `x_i(t)`. Any such optimum is a feasible IC mechanism.
pub fn solve_perturbed(inst: &DiscreteInstance, weights: &[Vec<f64>]) -> Result<MechanismSolution> {
    if weights.len() != inst.k() || weights.iter().any(|w| w.len() != inst.m()) {
        return invalid("perturbation must have one weight per allocation entry");
    }
    solve_mechanism(inst, Some(weights))
}

#[derive(Clone, Debug, PartialEq)]
pub enum RestrictedFamily {
    UniformPrice,
    BundlePrice,
    GivenMenu(MenuMechanism),
}

/// Best mechanism within a simple family, by enumerating candidate prices
/// at the types' breakpoints.
pub fn solve_restricted(inst: &DiscreteInstance, family: &RestrictedFamily) -> Result<MechanismSolution> {
    inst.validate()?;
    let (k, m) = (inst.k(), inst.m());
    match family {
        RestrictedFamily::UniformPrice => {
            if inst.setting != Setting::MultiOutcome {
                return invalid("uniform pricing applies to the multi-outcome setting");
            }
            let fav: Vec<(usize, f64)> = inst
                .types
                .iter()
                .map(|t| t.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b }))
                .collect();
            let unit = |i: usize| {
                let mut x = vec![0.0; m];
                x[i] = 1.0;
                x
            };
            let price = best_threshold(inst, &fav.iter().map(|f| f.1).collect::<Vec<_>>(), inst.cost);
            let x = (0..k).map(|t| if price.is_some_and(|p| fav[t].1 >= p) { unit(fav[t].0) } else { vec![0.0; m] }).collect();
            let p = (0..k).map(|t| match price {
                Some(p) if fav[t].1 >= p => p,
                _ => 0.0,
            });
            Ok(MechanismSolution::from_parts(inst, x, p.collect()))
        }
        RestrictedFamily::BundlePrice => {
            if inst.setting != Setting::MultiProduct {
                return invalid("bundle pricing applies to the multi-product setting");
            }
            let sums: Vec<f64> = inst.types.iter().map(|t| t.iter().sum()).collect();
            let bundle = vec![1.0; m];
            let price = best_threshold(inst, &sums, inst.cost_of(&bundle));
            let x = (0..k).map(|t| if price.is_some_and(|p| sums[t] >= p) { bundle.clone() } else { vec![0.0; m] }).collect();
            let p = (0..k).map(|t| match price {
                Some(p) if sums[t] >= p => p,
                _ => 0.0,
            });
            Ok(MechanismSolution::from_parts(inst, x, p.collect()))
        }
        RestrictedFamily::GivenMenu(menu) => {
            menu.validate(inst.setting, m)?;
            let mut x = Vec::with_capacity(k);
            let mut p = Vec::with_capacity(k);
            for t in &inst.types {
                let (a, price) = menu.choose(t);
                x.push(a);
                p.push(price);
            }
            Ok(MechanismSolution::from_parts(inst, x, p))
        }
    }
}

/// Price among the values maximizing `(p - cost) * P(value >= p)`, or `None`
/// when no price beats not selling.
fn best_threshold(inst: &DiscreteInstance, values: &[f64], cost: f64) -> Option<f64> {
    let mut cands: Vec<f64> = values.to_vec();
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();
    let mut best: Option<(f64, f64)> = None;
    for &p in &cands {
        let q: f64 = values.iter().zip(&inst.probs).filter(|(v, _)| **v >= p).map(|(_, q)| q).sum();
        let r = (p - cost) * q;
        if r > 0.0 && best.map_or(true, |(_, br)| r >= br) {
            best = Some((p, r));
        }
    }
    best.map(|(p, _)| p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub lp_opt: f64,
    pub best_simple: f64,
    pub simple_family: String,
    pub absolute_gap: f64,
    pub relative_gap: f64,
    pub lottery_support: bool,
}

/// Optimal LP profit against the best uniform price (multi-outcome) or
/// grand-bundle price (multi-product) on the same instance.
pub fn revenue_gap(inst: &DiscreteInstance, lottery_tol: f64) -> Result<(GapReport, MechanismSolution)> {
    let opt = solve_optimal_mechanism(inst)?;
    let (family, name) = match inst.setting {
        Setting::MultiOutcome => (RestrictedFamily::UniformPrice, "uniform_price"),
        Setting::MultiProduct => (RestrictedFamily::BundlePrice, "bundle_price"),
    };
    let simple = solve_restricted(inst, &family)?;
    let gap = opt.objective - simple.objective;
    let rel = if opt.objective.abs() > 0.0 { gap / opt.objective.abs() } else { 0.0 };
    let report = GapReport {
        lp_opt: opt.objective,
        best_simple: simple.objective,
        simple_family: name.into(),
        absolute_gap: gap,
        relative_gap: rel,
        lottery_support: opt.has_lottery(lottery_tol),
    };
    Ok((report, opt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub ic_residual: f64,
    pub ir_residual: f64,
    /// Largest violation of the allocation constraints.
    pub feasibility_residual: f64,
    /// Ordered pair `(t, t_hat)` with the largest IC violation.
    pub worst_pair: Option<(usize, usize)>,
    /// Largest violation of monotonicity along lines of constant sum
    /// (multi-product lattices only).
    pub sum_line_residual: Option<f64>,
}

/// Worst IC, IR and feasibility violations of a mechanism on an instance.
pub fn verify_ic(sol: &MechanismSolution, inst: &DiscreteInstance) -> IcReport {
    let k = inst.k();
    let util = |t: usize, s: usize| -> f64 { inst.types[t].iter().zip(&sol.x[s]).map(|(a, b)| a * b).sum::<f64>() - sol.p[s] };
    let mut ic: f64 = 0.0;
    let mut worst = None;
    for t in 0..k {
        let own = util(t, t);
        for s in 0..k {
            if s != t {
                let v = util(t, s) - own;
                if v > ic {
                    ic = v;
                    worst = Some((t, s));
                }
            }
        }
    }
    let ir = (0..k).map(|t| -util(t, t)).fold(0.0, f64::max);
    let feas = sol
        .x
        .iter()
        .map(|x| {
            let b = x.iter().map(|v| (-v).max(v - 1.0)).fold(0.0, f64::max);
            match inst.setting {
                Setting::MultiOutcome => b.max(x.iter().sum::<f64>() - 1.0),
                Setting::MultiProduct => b,
            }
        })
        .fold(0.0, f64::max);
    let sum_line = match (&inst.mesh, inst.m()) {
        (Some(mesh), 2) if mesh.layout == MeshLayout::SumLattice => {
            let mut lines: std::collections::BTreeMap<usize, Vec<(usize, usize)>> = Default::default();
            for (t, c) in mesh.cells.iter().enumerate() {
                lines.entry(c[0]).or_default().push((c[2], t));
            }
            let mut worst: f64 = 0.0;
            for line in lines.values_mut() {
                line.sort();
                for w in line.windows(2) {
                    let (a, b) = (w[0].1, w[1].1);
                    let d = (sol.x[b][1] - sol.x[b][0]) - (sol.x[a][1] - sol.x[a][0]);
                    worst = worst.max(-d);
                }
            }
            Some(worst)
        }
        _ => None,
    };
    IcReport { ic_residual: ic, ir_residual: ir, feasibility_residual: feas, worst_pair: worst, sum_line_residual: sum_line }
}
