//! One-dimensional projections: Myerson virtual values and ironing, posted
//! uniform and bundle prices, menu evaluation, counterexample menus and the
//! multi-agent favorite-outcome rule.

mod counterexample;
mod menu;
mod multi;

use serde::{Deserialize, Serialize};

pub use counterexample::{
    construct_additive_counterexample, construct_counterexample, loglog_slope, AdditiveCounterexample, Counterexample, LadderPoint,
};
pub use menu::{menu_revenue, path_revenue, MenuMechanism, MenuOption};
pub use multi::{multi_agent_allocate, simulate_multi_agent, AgentOutcome, MonteCarloRevenue, MultiAgentRule};

use crate::dist::{Marginal, MarginalSpec};
use crate::numeric::{concave_iron, golden_max, interp, linspace};
use crate::{invalid, Result};

/// Value grid with CDF and density, and a per-unit cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneDProblem {
    pub values: Vec<f64>,
    pub cdf: Vec<f64>,
    pub pdf: Vec<f64>,
    pub cost: f64,
}

impl OneDProblem {
    pub fn new(values: Vec<f64>, cdf: Vec<f64>, pdf: Vec<f64>, cost: f64) -> Result<Self> {
        let n = values.len();
        if n == 0 || cdf.len() != n || pdf.len() != n {
            return invalid("values, cdf and pdf must be non-empty and of equal length");
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("values must be strictly increasing");
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) || cdf[0] < 0.0 || (cdf[n - 1] - 1.0).abs() > 1e-9 {
            return invalid("cdf must be non-decreasing from >= 0 to 1");
        }
        if pdf.iter().any(|d| !(*d >= 0.0)) || !cost.is_finite() {
            return invalid("density must be non-negative and cost finite");
        }
        Ok(OneDProblem { values, cdf, pdf, cost })
    }

    /// Point mass at `v0`.
    pub fn point_mass(v0: f64, cost: f64) -> Result<Self> {
        OneDProblem::new(vec![v0], vec![1.0], vec![f64::INFINITY], cost)
    }

    pub fn from_marginal(m: &Marginal, cost: f64) -> Result<Self> {
        OneDProblem::new(m.nodes.clone(), m.cdf.clone(), m.pdf.clone(), cost)
    }

    pub fn from_spec(spec: &MarginalSpec, n: usize, cost: f64) -> Result<Self> {
        spec.validate()?;
        let (lo, hi) = spec.support();
        let v = linspace(lo, hi, n.max(2));
        let cdf = v.iter().map(|x| spec.cdf(*x)).collect();
        let pdf = v.iter().map(|x| spec.pdf(*x)).collect();
        OneDProblem::new(v, cdf, pdf, cost)
    }

    fn is_point_mass(&self) -> bool {
        self.values.len() == 1
    }

    /// `P(V >= p)`.
    pub fn survival(&self, p: f64) -> f64 {
        if self.is_point_mass() {
            return if p <= self.values[0] { 1.0 } else { 0.0 };
        }
        if p <= self.values[0] {
            return 1.0;
        }
        1.0 - interp(&self.values, &self.cdf, p).clamp(0.0, 1.0)
    }

    /// `(p - c) * P(V >= p)`.
    pub fn revenue_at(&self, p: f64) -> f64 {
        (p - self.cost) * self.survival(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub price: f64,
    pub revenue: f64,
    /// False when no price beats not selling.
    pub sells: bool,
}

/// Revenue-maximizing posted price: grid argmax, then golden-section
/// refinement on the neighbouring cells.
pub fn optimal_posted_price(prob: &OneDProblem) -> PriceResult {
    let v = &prob.values;
    let n = v.len();
    let no_sale = PriceResult { price: v[n - 1].max(prob.cost), revenue: 0.0, sells: false };
    if prob.is_point_mass() {
        let r = prob.revenue_at(v[0]);
        return if r > 0.0 { PriceResult { price: v[0], revenue: r, sells: true } } else { no_sale };
    }
    let mut best = 0;
    for i in 1..n {
        if prob.revenue_at(v[i]) > prob.revenue_at(v[best]) {
            best = i;
        }
    }
    let (a, b) = (v[best.saturating_sub(1)], v[(best + 1).min(n - 1)]);
    let p = golden_max(|x| prob.revenue_at(x), a, b, 1e-12 * (1.0 + b.abs()));
    let (p, r) = if prob.revenue_at(p) >= prob.revenue_at(v[best]) { (p, prob.revenue_at(p)) } else { (v[best], prob.revenue_at(v[best])) };
    if r > 0.0 {
        PriceResult { price: p, revenue: r, sells: true }
    } else {
        no_sale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersonResult {
    /// `v - (1 - F) / f` per value node (`NaN` where `f = 0`).
    pub phi: Vec<f64>,
    /// Non-decreasing ironed virtual values.
    pub phi_ironed: Vec<f64>,
    /// Smallest value with ironed virtual value at least the cost.
    pub threshold: Option<f64>,
    pub price: f64,
    pub revenue: f64,
}

pub fn myerson_1d(prob: &OneDProblem) -> MyersonResult {
    let best = optimal_posted_price(prob);
    if prob.is_point_mass() {
        let v0 = prob.values[0];
        return MyersonResult {
            phi: vec![v0],
            phi_ironed: vec![v0],
            threshold: (v0 >= prob.cost).then_some(v0),
            price: best.price,
            revenue: best.revenue,
        };
    }
    let n = prob.values.len();
    let phi: Vec<f64> = (0..n)
        .map(|i| if prob.pdf[i] > 0.0 { prob.values[i] - (1.0 - prob.cdf[i]) / prob.pdf[i] } else { f64::NAN })
        .collect();
    let phi_ironed = iron(&prob.values, &prob.cdf, &phi);
    let c = prob.cost;
    let threshold = match phi_ironed.iter().position(|p| *p >= c) {
        None => None,
        Some(0) => Some(prob.values[0]),
        Some(i) => {
            let (p0, p1) = (phi_ironed[i - 1], phi_ironed[i]);
            let (v0, v1) = (prob.values[i - 1], prob.values[i]);
            Some(if p1 > p0 { v0 + (c - p0) * (v1 - v0) / (p1 - p0) } else { v1 })
        }
    };
    MyersonResult { phi, phi_ironed, threshold, price: best.price, revenue: best.revenue }
}

/// Ironing in quantile space `q = 1 - F`: slopes of the least concave
/// majorant of the revenue curve `q v(q)`.
pub(crate) fn iron(values: &[f64], cdf: &[f64], phi: &[f64]) -> Vec<f64> {
    let order: Vec<usize> = (0..values.len()).rev().collect();
    let q: Vec<f64> = order.iter().map(|i| (1.0 - cdf[*i]).max(0.0)).collect();
    let r: Vec<f64> = order.iter().zip(&q).map(|(i, q)| q * values[*i]).collect();
    let d: Vec<f64> = order.iter().map(|i| phi[*i]).collect();
    let it = concave_iron(&q, &r, &d);
    let mut out = vec![0.0; values.len()];
    for (n, i) in order.iter().enumerate() {
        out[*i] = it.slope[n];
    }
    out
}

/// Best uniform price against the favorite-value marginal.
pub fn optimal_uniform_price(marg: &Marginal, c: f64) -> Result<PriceResult> {
    Ok(optimal_posted_price(&OneDProblem::from_marginal(marg, c)?))
}

/// Best grand-bundle price against the bundle-value marginal.
pub fn optimal_bundle_price(f_sum: &Marginal, c: f64) -> Result<PriceResult> {
    Ok(optimal_posted_price(&OneDProblem::from_marginal(f_sum, c)?))
}
