//! Amortizations of a discretized instance built from explicit flows on
//! its IC constraints. For any flow in which every type emits its own
//! probability net into a sink reached through IR constraints, the virtual
//! surplus bounds the revenue of every IC and IR mechanism on the instance.

use serde::{Deserialize, Serialize};

use crate::oracle::{DiscreteInstance, MechanismSolution, MeshLayout};
use crate::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// Favorite-value levels, per branch; flow moves to the next lower level.
    FavoriteLevels,
    /// Bundle-value levels.
    SumLevels,
    /// Consecutive samples along a curve.
    Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteAmortization {
    pub kind: FlowKind,
    /// Virtual value per type.
    pub phi: Vec<Vec<f64>>,
    /// `(from, to, amount)`; `to = None` is the sink.
    pub flows: Vec<(usize, Option<usize>, f64)>,
}

impl DiscreteAmortization {
    /// `sum_t prob(t) x(t) . phi(t)`.
    pub fn virtual_surplus(&self, inst: &DiscreteInstance, x: &[Vec<f64>]) -> f64 {
        (0..inst.k()).map(|t| inst.probs[t] * x[t].iter().zip(&self.phi[t]).map(|(a, b)| a * b).sum::<f64>()).sum()
    }

    /// Virtual surplus minus revenue of a mechanism; non-negative for every
    /// IC and IR mechanism up to its residuals.
    pub fn slack(&self, inst: &DiscreteInstance, sol: &MechanismSolution) -> f64 {
        self.virtual_surplus(inst, &sol.x) - sol.revenue(inst)
    }

    /// Largest violation of flow conservation `out - in = prob`.
    pub fn conservation_error(&self, inst: &DiscreteInstance) -> f64 {
        let mut net = vec![0.0; inst.k()];
        for (a, b, w) in &self.flows {
            net[*a] += w;
            if let Some(b) = b {
                net[*b] -= w;
            }
        }
        net.iter().zip(&inst.probs).map(|(n, p)| (n - p).abs()).fold(0.0, f64::max)
    }
}

/// Level entries `(type, weight)`, levels ordered from the top down, each
/// ordered by the coupling key.
type Levels = Vec<Vec<(usize, f64)>>;

/// Flow amortization following the instance's mesh: each level passes the
/// mass at and above it to the next lower level of its branch, and the
/// lowest level drains through IR.
pub fn discrete_amortization(inst: &DiscreteInstance) -> Result<DiscreteAmortization> {
    inst.validate()?;
    let Some(mesh) = &inst.mesh else {
        return invalid("instance carries no mesh; discretize a grid to build flows");
    };
    if inst.m() != 2 {
        return invalid("flow amortizations need two-dimensional types");
    }
    let k = inst.k();
    if mesh.cells.len() != k {
        return invalid("mesh cells do not match the types");
    }
    let kind = match mesh.layout {
        MeshLayout::Curve => FlowKind::Chain,
        MeshLayout::FavoriteLattice => FlowKind::FavoriteLevels,
        MeshLayout::SumLattice => FlowKind::SumLevels,
    };
    let top = mesh.cells.iter().map(|c| c[0]).max().unwrap_or(0);
    let nbranch = mesh.cells.iter().map(|c| c[1]).max().unwrap_or(0) + 1;
    let mut chains: Vec<Levels> = vec![vec![Vec::new(); top + 1]; nbranch];
    for (t, c) in mesh.cells.iter().enumerate() {
        chains[c[1]][top - c[0]].push((t, inst.probs[t]));
    }
    for levels in &mut chains {
        for l in levels.iter_mut() {
            l.sort_by_key(|(t, _)| (mesh.cells[*t][2], *t));
        }
    }
    let mut flows = Vec::new();
    for levels in chains {
        chain_flows(&levels, &mut flows);
    }
    let mut pull = vec![[0.0; 2]; k];
    for (a, b, w) in &flows {
        if let Some(b) = b {
            for c in 0..2 {
                pull[*b][c] += w * (inst.types[*a][c] - inst.types[*b][c]);
            }
        }
    }
    let phi = (0..k)
        .map(|t| {
            let p = inst.probs[t];
            (0..2).map(|c| if p > 0.0 { inst.types[t][c] - pull[t][c] / p } else { inst.types[t][c] }).collect()
        })
        .collect();
    Ok(DiscreteAmortization { kind, phi, flows })
}

/// Flow from each non-empty level to the next, with total equal to the mass
/// at and above the sending level; the last level drains into the sink.
/// Sending and receiving profiles are proportional to the entries' weights
/// and matched in order (north-west corner rule).
fn chain_flows(levels: &Levels, flows: &mut Vec<(usize, Option<usize>, f64)>) {
    let levels: Vec<&Vec<(usize, f64)>> = levels.iter().filter(|l| l.iter().any(|e| e.1 > 0.0)).collect();
    let mut above = 0.0;
    for (n, level) in levels.iter().enumerate() {
        let mass: f64 = level.iter().map(|e| e.1).sum();
        above += mass;
        let out: Vec<(usize, f64)> = level.iter().map(|(t, w)| (*t, w / mass * above)).collect();
        match levels.get(n + 1) {
            None => flows.extend(out.into_iter().map(|(t, w)| (t, None, w))),
            Some(next) => {
                let nm: f64 = next.iter().map(|e| e.1).sum();
                let inn: Vec<(usize, f64)> = next.iter().map(|(t, w)| (*t, w / nm * above)).collect();
                let (mut i, mut j) = (0, 0);
                let (mut ri, mut rj) = (out[0].1, inn[0].1);
                while i < out.len() && j < inn.len() {
                    let amt = ri.min(rj);
                    if amt > 0.0 {
                        flows.push((out[i].0, Some(inn[j].0), amt));
                    }
                    ri -= amt;
                    rj -= amt;
                    if ri <= 1e-15 * above {
                        i += 1;
                        if i < out.len() {
                            ri = out[i].1;
                        }
                    }
                    if rj <= 1e-15 * above {
                        j += 1;
                        if j < inn.len() {
                            rj = inn[j].1;
                        }
                    }
                }
            }
        }
    }
}
