//! CSV and JSON output of fields.

use std::fs;
use std::path::Path;

use super::{AmortizationField, IronedField};
use crate::Result;

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        String::new()
    }
}

/// `t1,t2,lambda1,lambda2,phi1,phi2` per node; undefined values are empty.
pub fn write_field_csv(field: &AmortizationField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t1", "t2", "lambda1", "lambda2", "phi1", "phi2"])?;
    for i in 0..field.geometry.pos.len() {
        let t = field.geometry.pos[i];
        let (l, p) = (field.lambda[i], field.phi[i]);
        w.write_record([num(t[0]), num(t[1]), num(l[0]), num(l[1]), num(p[0]), num(p[1])])?;
    }
    w.flush()?;
    Ok(())
}

/// Construction tag, diagnostics and notes.
pub fn write_field_json(field: &AmortizationField, path: &Path) -> Result<()> {
    let v = serde_json::json!({
        "construction": field.construction,
        "diagnostics": field.diagnostics,
        "flagged_nodes": field.flagged.len(),
        "notes": field.notes,
    });
    fs::write(path, serde_json::to_string_pretty(&v)? + "\n")?;
    Ok(())
}

/// `q1,q2,t1,t2,phi1,phi1_bar,phi2,phi2_bar,mu` per node.
pub fn write_ironed_csv(field: &IronedField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["q1", "q2", "t1", "t2", "phi1", "phi1_bar", "phi2", "phi2_bar", "mu"])?;
    let nq2 = field.n_q2();
    for i in 0..field.q1.len() {
        for r in 0..nq2 {
            let x = i * nq2 + r;
            w.write_record([
                num(field.q1[i]),
                num(field.q2[r]),
                num(field.t1[i]),
                num(field.t2[x]),
                num(field.phi1[i]),
                num(field.phi1_bar[i]),
                num(field.phi2[x]),
                num(field.phi2_bar[x]),
                num(field.mu[x]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
