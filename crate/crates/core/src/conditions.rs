//! Sufficient and necessary conditions for optimality of uniform pricing
//! and grand-bundle pricing, each returned with a numeric witness.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{
    equi_quantile, favorite_marginal, CurveSamples, Marginal, MaxRatioGrid, QuantileCurves, RatioGrid,
    SequentialGrid, SumRatioGrid,
};
use crate::numeric::{bisect, linspace, trapz};
use crate::report::{CertificationReport, CheckResult};
use crate::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    /// Relative tolerance; value-valued quantities use `tol * scale`.
    pub tol: f64,
    /// Quantile levels for curve-based checks.
    pub q_levels: Vec<f64>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { tol: 1e-9, q_levels: (1..10).map(|i| i as f64 / 10.0).collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    UnitDemand,
    Additive,
    UnitDemandIroned,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::UnitDemand => "unit_demand",
            Mode::Additive => "additive",
            Mode::UnitDemandIroned => "unit_demand_ironed",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit_demand" => Ok(Mode::UnitDemand),
            "additive" => Ok(Mode::Additive),
            "unit_demand_ironed" => Ok(Mode::UnitDemandIroned),
            _ => invalid(format!("unknown mode {s:?}")),
        }
    }
}

/// Required direction of `C(x) / x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioDirection {
    /// Unit demand: the ratio must not fall.
    NonDecreasing,
    /// Additive: the ratio must not rise.
    NonIncreasing,
}

/// Tracks the smallest slack and where it occurred.
struct Worst<W> {
    slack: f64,
    at: Option<W>,
}

impl<W> Worst<W> {
    fn new() -> Self {
        Worst { slack: f64::INFINITY, at: None }
    }
    fn offer(&mut self, slack: f64, at: impl FnOnce() -> W) {
        if slack < self.slack {
            self.slack = slack;
            self.at = Some(at());
        }
    }
}

/// Virtual value of the favorite-value marginal is non-decreasing.
pub fn check_regular_favorite(marg: &Marginal, opts: &CheckOptions) -> CheckResult {
    regular_check("regular_favorite", "v", marg, opts)
}

/// Virtual value of the bundle-value marginal is non-decreasing.
pub fn check_regular_sum(marg: &Marginal, opts: &CheckOptions) -> CheckResult {
    regular_check("regular_sum", "s", marg, opts)
}

fn regular_check(name: &str, coord: &str, marg: &Marginal, opts: &CheckOptions) -> CheckResult {
    let n = marg.nodes.len();
    let scale = marg.nodes.iter().fold(0.0_f64, |a, b| a.max(b.abs())).max(1e-300);
    let tol = opts.tol * scale;
    let phi = marg.virtual_values();
    let mut worst = Worst::new();
    let mut prev: Option<(usize, f64)> = None;
    let mut gaps = 0;
    for i in 0..n {
        let (c, d) = (marg.cdf[i], marg.pdf[i]);
        let value = if d > 0.0 {
            phi[i]
        } else if c > 1e-12 && c < 1.0 - 1e-12 {
            // density vanishes with mass on both sides: the virtual value
            // diverges to -inf approaching this node
            gaps += 1;
            f64::NEG_INFINITY
        } else {
            continue;
        };
        if let Some((p, pv)) = prev {
            let slack = if value == pv { 0.0 } else { value - pv };
            worst.offer(slack, || (p, i, value - pv));
        }
        prev = Some((i, value));
    }
    let Some((p, i, drop)) = worst.at else {
        return CheckResult::inconclusive(name, f64::NAN, coord, "fewer than two nodes with positive density");
    };
    let mut r = if worst.slack < -tol {
        CheckResult::fail(name, worst.slack, coord, vec![marg.nodes[p]], vec![marg.nodes[i]], drop)
    } else {
        CheckResult::pass(name, worst.slack, coord)
    };
    if gaps > 0 {
        r = r.note(format!("{gaps} interior nodes with zero density"));
    }
    r
}

/// Conditional ratio CDF `F(theta | v)` is non-increasing in `v` at every
/// grid ratio. Curve-supported families use their exact step CDFs.
pub fn check_fosd_ratio(grid: &MaxRatioGrid, opts: &CheckOptions) -> CheckResult {
    let name = "fosd_ratio";
    if let Some(band) = &grid.grid.meta.band {
        return step_fosd(name, band, opts);
    }
    let g = &grid.grid;
    let mut worst = Worst::new();
    adjacent_cdf_pairs(g, |j, th, a, b| worst.offer(a - b, || (j, th, b - a)));
    let mut r = match worst.at {
        None => return CheckResult::inconclusive(name, f64::NAN, "v,theta", "no two adjacent non-empty columns"),
        Some((j, th, rise)) if worst.slack < -opts.tol => {
            CheckResult::fail(name, worst.slack, "v,theta", vec![g.anchor[j], th], vec![g.anchor[j + 1], th], rise)
        }
        Some(_) => CheckResult::pass(name, worst.slack, "v,theta"),
    };
    if g.branch_weights.iter().filter(|w| **w > 0.0).count() > 1 {
        r = r.note("all branches share one ratio density by max-symmetry");
    }
    r
}

/// Calls `f(j, theta, F_j(theta), F_{j+1}(theta))` for every pair of
/// adjacent non-degenerate columns at the ratio nodes of both columns.
fn adjacent_cdf_pairs(g: &RatioGrid, mut f: impl FnMut(usize, f64, f64, f64)) {
    for j in 0..g.n_anchor() - 1 {
        if g.is_degenerate(j) || g.is_degenerate(j + 1) {
            continue;
        }
        let mut ths = g.theta_column(j);
        ths.extend(g.theta_column(j + 1));
        for th in ths {
            f(j, th, g.cond_cdf_at(j, th), g.cond_cdf_at(j + 1, th));
        }
    }
}

fn step_fosd(name: &str, samples: &[[f64; 2]], opts: &CheckOptions) -> CheckResult {
    let pts: Vec<(f64, f64)> = samples.iter().filter(|p| p[0] > 0.0).map(|p| (p[0], p[1] / p[0])).collect();
    let mut worst = Worst::new();
    for w in pts.windows(2) {
        worst.offer(w[1].1 - w[0].1, || (w[0], w[1]));
    }
    match worst.at {
        None => CheckResult::inconclusive(name, f64::NAN, "v,theta", "fewer than two curve samples"),
        Some((a, b)) if worst.slack < -opts.tol => {
            // at theta = r(b) the later column has reached 1, the earlier is still 0
            CheckResult::fail(name, worst.slack, "v,theta", vec![a.0, b.1], vec![b.0, b.1], 1.0)
        }
        Some(_) => CheckResult::pass(name, worst.slack, "v,theta").note("exact step CDFs of the curve"),
    }
}

/// Every ratio CDF given `v` and the quantile prefix of the earlier ratios
/// is non-increasing in `v`. Supports up to three outcomes.
pub fn check_sequential_fosd(grid: &SequentialGrid, opts: &CheckOptions) -> Result<CheckResult> {
    if grid.m > 3 {
        return Err(Error::Unsupported(format!("sequential check needs m <= 3, got {}", grid.m)));
    }
    let pair = MaxRatioGrid { grid: grid.pair_grid()? };
    let first = check_fosd_ratio(&pair, opts);
    if grid.m == 2 {
        return Ok(CheckResult { name: "sequential_fosd".into(), ..first });
    }
    let name = "sequential_fosd";
    let coords = "v,q2,theta3";
    if first.verdict == crate::report::Verdict::Fail {
        let w = first.witness.clone().unwrap_or_default();
        return Ok(CheckResult::fail(name, first.margin, "v,theta2", w[0].clone(), w[1].clone(), first.witness_value.unwrap_or(0.0))
            .note("second-outcome ratio violates the ordering"));
    }
    let nv = grid.v.len();
    let levels = linspace(0.0, 1.0, grid.theta.len());
    let mut worst = Worst::new();
    for &q in &levels[1..levels.len() - 1] {
        let cdfs: Vec<Option<Vec<f64>>> = (0..nv).map(|j| grid.second_ratio_cdf(j, q)).collect();
        for j in 0..nv - 1 {
            let (Some(a), Some(b)) = (&cdfs[j], &cdfs[j + 1]) else { continue };
            for (k, th) in grid.theta.iter().enumerate() {
                worst.offer(a[k] - b[k], || (j, q, *th, b[k] - a[k]));
            }
        }
    }
    Ok(match worst.at {
        None => CheckResult::inconclusive(name, f64::NAN, coords, "no two adjacent non-empty columns"),
        Some((j, q, th, rise)) if worst.slack < -opts.tol => {
            CheckResult::fail(name, worst.slack, coords, vec![grid.v[j], q, th], vec![grid.v[j + 1], q, th], rise)
        }
        Some(_) => CheckResult::pass(name, worst.slack.min(first.margin), coords),
    })
}

/// `C(x) / x` is monotone in the requested direction over the samples.
pub fn check_ratio_monotone_curve(curve: &CurveSamples, dir: RatioDirection, opts: &CheckOptions) -> Result<CheckResult> {
    if curve.0.len() < 3 {
        return invalid("ratio check needs at least three samples");
    }
    let name = match dir {
        RatioDirection::NonDecreasing => "ratio_monotone_curve",
        RatioDirection::NonIncreasing => "ratio_monotone_curve_additive",
    };
    let pts: Vec<(f64, f64)> = curve.0.iter().filter(|p| p[0] > 0.0).map(|p| (p[0], p[1] / p[0])).collect();
    let sign = match dir {
        RatioDirection::NonDecreasing => 1.0,
        RatioDirection::NonIncreasing => -1.0,
    };
    let mut worst = Worst::new();
    for w in pts.windows(2) {
        worst.offer(sign * (w[1].1 - w[0].1), || (w[0], w[1]));
    }
    Ok(match worst.at {
        None => CheckResult::inconclusive(name, f64::NAN, "x,ratio", "no samples with positive abscissa"),
        Some((a, b)) if worst.slack < -opts.tol => {
            CheckResult::fail(name, worst.slack, "x,ratio", vec![a.0, a.1], vec![b.0, b.1], b.1 - a.1)
        }
        Some(_) => CheckResult::pass(name, worst.slack, "x,ratio"),
    })
}

/// Equi-quantile curves at `opts.q_levels` are convex. Each curve is
/// extended through the origin, so a positive intercept counts as a kink.
pub fn check_convex_equiquantile<G: QuantileCurves>(grid: &G, opts: &CheckOptions) -> Result<CheckResult> {
    let name = "convex_equiquantile";
    let scale = grid.ratio_grid().scale;
    let tol = opts.tol * scale;
    let mut worst = Worst::new();
    for &q in &opts.q_levels {
        let curve = equi_quantile(grid, q)?;
        let mut pts = curve.samples.clone();
        if pts[0][0] > 0.0 {
            pts.insert(0, [0.0, 0.0]);
        }
        for w in pts.windows(3) {
            let s1 = (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]);
            let s2 = (w[2][1] - w[1][1]) / (w[2][0] - w[1][0]);
            let d2 = (s2 - s1) * 0.5 * (w[2][0] - w[0][0]);
            worst.offer(d2, || (q, w[0], w[2]));
        }
    }
    Ok(match worst.at {
        None => CheckResult::inconclusive(name, f64::NAN, "anchor,t2", "curves too short"),
        Some((q, a, b)) if worst.slack < -tol => {
            CheckResult::fail(name, worst.slack, "anchor,t2", a.to_vec(), b.to_vec(), worst.slack)
                .note(format!("q = {q}"))
        }
        Some(_) => CheckResult::pass(name, worst.slack, "anchor,t2"),
    })
}

/// `f(v, th) f(v', th') >= f(v, th') f(v', th)` on adjacent cells of a
/// common `(v, theta)` lattice; zero off the support.
pub fn check_mr_log_supermodular(grid: &MaxRatioGrid, opts: &CheckOptions) -> CheckResult {
    let name = "mr_log_supermodular";
    let g = &grid.grid;
    let ths = linspace(0.0, 1.0, g.n_ratio());
    let eps = 1e-12;
    // 0: off support, 1: boundary, 2: interior
    let node = |j: usize, th: f64| -> (f64, u8) {
        let (lo, hi) = (g.theta_lo[j], g.theta_hi[j]);
        if th < lo - eps || th > hi + eps {
            return (0.0, 0);
        }
        let interior = th > lo + eps && th < hi - eps && j > 0 && j + 1 < g.n_anchor();
        (g.density_at(g.anchor[j], th), if interior { 2 } else { 1 })
    };
    let mut worst = Worst::new();
    let mut holes = 0usize;
    for j in 0..g.n_anchor() - 1 {
        if g.is_degenerate(j) || g.is_degenerate(j + 1) {
            continue;
        }
        for k in 0..ths.len() - 1 {
            let cell = [node(j, ths[k]), node(j + 1, ths[k + 1]), node(j, ths[k + 1]), node(j + 1, ths[k])];
            if cell.iter().any(|(d, c)| *c == 2 && *d <= 0.0) {
                holes += 1;
                continue;
            }
            if cell.iter().any(|(d, c)| *c == 1 && *d <= 0.0) {
                continue;
            }
            let (ab, cd) = (cell[0].0 * cell[1].0, cell[2].0 * cell[3].0);
            let big = ab.max(cd);
            if big <= 0.0 {
                continue;
            }
            worst.offer((ab - cd) / big, || (j, k, ab - cd));
        }
    }
    if holes > 0 && worst.slack >= -opts.tol {
        return CheckResult::inconclusive(name, worst.slack, "v,theta", format!("{holes} cells with zero density inside the support"));
    }
    match worst.at {
        None => CheckResult::inconclusive(name, f64::NAN, "v,theta", "no cells with positive density"),
        Some((j, k, gap)) if worst.slack < -opts.tol => CheckResult::fail(
            name,
            worst.slack,
            "v,theta",
            vec![g.anchor[j], ths[k]],
            vec![g.anchor[j + 1], ths[k + 1]],
            gap,
        ),
        Some(_) => CheckResult::pass(name, worst.slack, "v,theta"),
    }
}

/// Conditional ratio CDF given the bundle value is non-decreasing in `s`.
pub fn check_fosd_sum(grid: &SumRatioGrid, opts: &CheckOptions) -> CheckResult {
    let name = "fosd_sum";
    let g = &grid.grid;
    let mut worst = Worst::new();
    adjacent_cdf_pairs(g, |j, th, a, b| worst.offer(b - a, || (j, th, a - b)));
    match worst.at {
        None => CheckResult::inconclusive(name, f64::NAN, "s,theta", "no two adjacent non-empty columns"),
        Some((j, th, drop)) if worst.slack < -opts.tol => {
            CheckResult::fail(name, worst.slack, "s,theta", vec![g.anchor[j], th], vec![g.anchor[j + 1], th], drop)
        }
        Some(_) => CheckResult::pass(name, worst.slack, "s,theta"),
    }
}

/// Stationary prices of the favorite-value revenue curve, refined by
/// bisection.
pub fn stationary_prices(marg: &Marginal) -> Vec<f64> {
    let phi = marg.virtual_values();
    let mut out = Vec::new();
    for i in 0..phi.len() - 1 {
        let (a, b) = (phi[i], phi[i + 1]);
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        if a == 0.0 {
            out.push(marg.nodes[i]);
        } else if a * b < 0.0 {
            let (lo, hi) = (marg.nodes[i], marg.nodes[i + 1]);
            out.push(bisect(|v| marg.virtual_value_at(v), lo, hi, 1e-13 * hi.abs().max(1.0)));
        }
    }
    let last = phi.len() - 1;
    if phi[last] == 0.0 {
        out.push(marg.nodes[last]);
    }
    out
}

/// Test quantity `p - 2 (integral of f(t, t) over [p, vmax]) / f(p, p)`.
pub fn necessary_value(grid: &MaxRatioGrid, p: f64) -> Option<f64> {
    let fd = grid.diagonal_density(p);
    if !(fd > 0.0) {
        return None;
    }
    let mut xs = vec![p];
    xs.extend(grid.v_nodes().iter().copied().filter(|v| *v > p));
    let ys: Vec<f64> = xs.iter().map(|t| grid.diagonal_density(*t)).collect();
    Some(p - 2.0 * trapz(&xs, &ys) / fd)
}

/// Uniform pricing is provably suboptimal when the test quantity is
/// positive at every stationary price (reported as a fail).
pub fn check_necessary_uniform(grid: &MaxRatioGrid, opts: &CheckOptions) -> CheckResult {
    let name = "necessary_uniform";
    let marg = favorite_marginal(grid);
    let vmax = *grid.v_nodes().last().unwrap_or(&0.0);
    let roots = stationary_prices(&marg);
    let native = format!("evaluated on the native support [{}, {vmax}]", grid.v_nodes()[0]);
    if roots.is_empty() {
        return CheckResult::inconclusive(name, f64::NAN, "t1,t2", "no stationary price").note(native).advisory();
    }
    let mut least = (f64::INFINITY, roots[0]);
    for &p in &roots {
        match necessary_value(grid, p) {
            None => {
                return CheckResult::inconclusive(name, f64::NAN, "t1,t2", format!("zero diagonal density at p = {p}"))
                    .note(native)
                    .advisory()
            }
            Some(v) if v < least.0 => least = (v, p),
            Some(_) => {}
        }
    }
    let tol = opts.tol * grid.grid.scale;
    let r = if least.0 > tol {
        CheckResult::fail(name, -least.0, "t1,t2", vec![least.1, least.1], vec![vmax, vmax], least.0)
            .note("uniform pricing is not optimal")
    } else {
        CheckResult::inconclusive(name, -least.0, "t1,t2", format!("test value {} at p = {}", least.0, least.1))
    };
    r.note(format!("stationary prices {roots:?}")).note(native).advisory()
}

#[derive(Clone, Copy)]
pub enum CertifyGrid<'a> {
    Max(&'a MaxRatioGrid),
    Sum(&'a SumRatioGrid),
}

/// Runs the required checks of `mode` plus the applicable necessary tests.
pub fn certify(grid: CertifyGrid<'_>, mode: Mode, opts: &CheckOptions) -> Result<CertificationReport> {
    let mut checks = Vec::new();
    let mut notes = Vec::new();
    match (mode, grid) {
        (Mode::UnitDemand, CertifyGrid::Max(g)) => {
            checks.push(check_regular_favorite(&favorite_marginal(g), opts));
            checks.push(check_fosd_ratio(g, opts));
            checks.push(check_necessary_uniform(g, opts));
            if let Some(curve) = g.band_curve() {
                if curve.0.len() >= 3 {
                    checks.push(check_ratio_monotone_curve(&curve, RatioDirection::NonDecreasing, opts)?.advisory());
                }
            }
        }
        (Mode::UnitDemandIroned, CertifyGrid::Max(g)) => {
            checks.push(check_convex_equiquantile(g, opts)?);
            checks.push(check_regular_favorite(&favorite_marginal(g), opts).advisory());
            checks.push(check_necessary_uniform(g, opts));
        }
        (Mode::Additive, CertifyGrid::Sum(g)) => {
            checks.push(check_regular_sum(&g.sum_marginal(), opts));
            checks.push(check_fosd_sum(g, opts));
        }
        (m, _) => return invalid(format!("grid coordinates do not match mode {}", m.as_str())),
    }
    let scale = match grid {
        CertifyGrid::Max(g) => g.grid.scale,
        CertifyGrid::Sum(g) => g.grid.scale,
    };
    notes.push(format!("scale {scale}; tolerance {} relative", opts.tol));
    Ok(CertificationReport::new(mode.as_str(), checks, notes))
}
