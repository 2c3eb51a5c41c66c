//! Several agents, one item per sale: serve the agent with the highest
//! favorite-value virtual value, charging the threshold value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{FamilySpec, Marginal};
use crate::numeric::bisect;
use crate::{invalid, Error, Result};

/// Per-agent virtual values for the allocation rule; construction refuses
/// irregular marginals.
#[derive(Clone, Debug)]
pub struct MultiAgentRule {
    marginals: Vec<Marginal>,
    cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub winner: Option<usize>,
    /// Outcome (the winner's favorite) that is allocated.
    pub outcome: usize,
    pub payment: f64,
}

impl MultiAgentRule {
    pub fn new(marginals: Vec<Marginal>, cost: f64) -> Result<Self> {
        if marginals.is_empty() {
            return invalid("need at least one agent");
        }
        for (i, m) in marginals.iter().enumerate() {
            let phi = m.virtual_values();
            let pts: Vec<f64> = phi.into_iter().filter(|p| p.is_finite()).collect();
            let scale = m.support().1.abs().max(1e-300);
            if pts.windows(2).any(|w| w[1] < w[0] - 1e-6 * scale) {
                return Err(Error::Unsupported(format!(
                    "agent {i} has an irregular favorite-value marginal; use the ironed single-agent pipeline"
                )));
            }
        }
        Ok(MultiAgentRule { marginals, cost })
    }

    pub fn phi(&self, agent: usize, v: f64) -> f64 {
        let m = &self.marginals[agent];
        let (lo, hi) = m.support();
        let v = v.clamp(lo, hi);
        let p = m.virtual_value_at(v);
        if p.is_finite() {
            p
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Winner is the highest virtual value at least the cost (lowest index
    /// on ties); the payment is the smallest favorite value that still wins.
    pub fn allocate(&self, types: &[[f64; 2]]) -> Result<AgentOutcome> {
        if types.len() != self.marginals.len() {
            return invalid(format!("{} types for {} agents", types.len(), self.marginals.len()));
        }
        let fav = |t: &[f64; 2]| if t[0] >= t[1] { (t[0], 0) } else { (t[1], 1) };
        let phis: Vec<f64> = types.iter().enumerate().map(|(i, t)| self.phi(i, fav(t).0)).collect();
        let mut winner: Option<usize> = None;
        for (i, p) in phis.iter().enumerate() {
            if *p >= self.cost && winner.map_or(true, |w| *p > phis[w]) {
                winner = Some(i);
            }
        }
        let Some(w) = winner else {
            return Ok(AgentOutcome { winner: None, outcome: 0, payment: 0.0 });
        };
        let (v, outcome) = fav(&types[w]);
        let target = phis.iter().enumerate().filter(|(j, _)| *j != w).map(|(_, p)| *p).fold(self.cost, f64::max);
        let lo = self.marginals[w].support().0;
        let payment = if self.phi(w, lo) >= target { lo } else { bisect(|x| self.phi(w, x) - target, lo, v, 1e-13 * (1.0 + v.abs())) };
        Ok(AgentOutcome { winner: Some(w), outcome, payment })
    }
}

/// One-shot allocation for given agent types.
pub fn multi_agent_allocate(marginals: &[Marginal], types: &[[f64; 2]], c: f64) -> Result<AgentOutcome> {
    MultiAgentRule::new(marginals.to_vec(), c)?.allocate(types)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRevenue {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

const CHUNK: usize = 4096;

/// Monte-Carlo expected profit of the rule with agents drawn from `specs`.
/// Each chunk of draws has its own stream of a seeded generator, so the
/// result does not depend on the thread count.
pub fn simulate_multi_agent(specs: &[FamilySpec], rule: &MultiAgentRule, samples: usize, seed: u64) -> Result<MonteCarloRevenue> {
    if specs.len() != rule.marginals.len() || samples == 0 {
        return invalid("need one spec per agent and at least one sample");
    }
    let chunks = samples.div_ceil(CHUNK);
    let sums: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let types: Vec<[f64; 2]> = specs
                    .iter()
                    .map(|s| s.sample(&mut rng).ok_or_else(|| Error::Unsupported("cannot sample a file-backed family".into())))
                    .collect::<Result<_>>()?;
                let out = rule.allocate(&types)?;
                let r = if out.winner.is_some() { out.payment - rule.cost } else { 0.0 };
                s1 += r;
                s2 += r * r;
            }
            Ok((s1, s2))
        })
        .collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    for r in sums {
        let (a, b) = r?;
        s1 += a;
        s2 += b;
    }
    let n = samples as f64;
    let mean = s1 / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(MonteCarloRevenue { mean, std_error: (var / n).sqrt(), samples })
}
