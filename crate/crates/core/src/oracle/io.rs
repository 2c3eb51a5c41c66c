//! Instance JSON and solution CSV files.

use std::fs;
use std::path::Path;

use super::{DiscreteInstance, MechanismSolution};
use crate::{invalid, Result};

pub fn read_instance(path: &Path) -> Result<DiscreteInstance> {
    let text = fs::read_to_string(path)?;
    let inst: DiscreteInstance = serde_json::from_str(&text)?;
    inst.validate()?;
    Ok(inst)
}

pub fn write_instance(inst: &DiscreteInstance, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(inst)? + "\n")?;
    Ok(())
}

fn header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=m).map(|i| format!("t{i}")).collect();
    h.extend((1..=m).map(|i| format!("x{i}")));
    h.push("p".into());
    h
}

/// One row per type: `t1,..,tm,x1,..,xm,p`.
pub fn write_solution_csv(inst: &DiscreteInstance, sol: &MechanismSolution, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(inst.m()))?;
    for t in 0..inst.k() {
        let mut rec: Vec<String> = inst.types[t].iter().map(|v| format!("{v:.17e}")).collect();
        rec.extend(sol.x[t].iter().map(|v| format!("{v:.17e}")));
        rec.push(format!("{:.17e}", sol.p[t]));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads allocations and payments back; types must match the instance.
pub fn read_solution_csv(inst: &DiscreteInstance, path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let m = inst.m();
    let mut r = csv::Reader::from_path(path)?;
    let h: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    if h != header(m) {
        return invalid(format!("unexpected solution header {h:?}"));
    }
    let mut x = Vec::new();
    let mut p = Vec::new();
    for (t, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec.iter().map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| crate::Error::InvalidInput(format!("row {t}: {e}")))?;
        if t >= inst.k() || vals[..m].iter().zip(&inst.types[t]).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs())) {
            return invalid(format!("row {t} does not match the instance types"));
        }
        x.push(vals[m..2 * m].to_vec());
        p.push(vals[2 * m]);
    }
    if x.len() != inst.k() {
        return invalid("solution has the wrong number of rows");
    }
    Ok((x, p))
}
