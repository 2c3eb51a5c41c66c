//! Structured verdicts for condition checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of one check. `margin` is the worst signed slack (negative on
/// failure). A failing check always names two grid points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    pub margin: f64,
    pub witness: Option<[Vec<f64>; 2]>,
    pub witness_value: Option<f64>,
    /// Labels of the witness coordinates, e.g. `v,theta`.
    pub coords: String,
    pub required: bool,
    pub notes: Vec<String>,
}

impl CheckResult {
    pub fn pass(name: &str, margin: f64, coords: &str) -> Self {
        CheckResult {
            name: name.into(),
            verdict: Verdict::Pass,
            margin,
            witness: None,
            witness_value: None,
            coords: coords.into(),
            required: true,
            notes: Vec::new(),
        }
    }

    pub fn fail(name: &str, margin: f64, coords: &str, a: Vec<f64>, b: Vec<f64>, value: f64) -> Self {
        CheckResult {
            verdict: Verdict::Fail,
            witness: Some([a, b]),
            witness_value: Some(value),
            ..CheckResult::pass(name, margin, coords)
        }
    }

    pub fn inconclusive(name: &str, margin: f64, coords: &str, note: impl Into<String>) -> Self {
        CheckResult {
            verdict: Verdict::Inconclusive,
            notes: vec![note.into()],
            ..CheckResult::pass(name, margin, coords)
        }
    }

    pub fn advisory(mut self) -> Self {
        self.required = false;
        self
    }

    pub fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub mode: String,
    pub checks: Vec<CheckResult>,
    pub overall_verdict: Verdict,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct CheckJson<'a> {
    verdict: Verdict,
    margin: Option<f64>,
    witness: &'a Option<[Vec<f64>; 2]>,
    witness_value: Option<f64>,
    coords: &'a str,
    required: bool,
    notes: &'a [String],
}

#[derive(Serialize)]
struct ReportJson<'a> {
    mode: &'a str,
    overall_verdict: Verdict,
    checks: BTreeMap<&'a str, CheckJson<'a>>,
    notes: &'a [String],
}

impl CertificationReport {
    pub fn new(mode: &str, checks: Vec<CheckResult>, notes: Vec<String>) -> Self {
        let required = checks.iter().filter(|c| c.required);
        let overall = if required.clone().any(|c| c.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if required.clone().all(|c| c.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        };
        CertificationReport { mode: mode.into(), checks, overall_verdict: overall, notes }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `{mode, overall_verdict, checks: {name -> {...}}, notes}` with keys
    /// in a fixed order.
    pub fn to_json(&self) -> String {
        let checks = self
            .checks
            .iter()
            .map(|c| {
                (
                    c.name.as_str(),
                    CheckJson {
                        verdict: c.verdict,
                        margin: c.margin.is_finite().then_some(c.margin),
                        witness: &c.witness,
                        witness_value: c.witness_value,
                        coords: &c.coords,
                        required: c.required,
                        notes: &c.notes,
                    },
                )
            })
            .collect();
        let r = ReportJson { mode: &self.mode, overall_verdict: self.overall_verdict, checks, notes: &self.notes };
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}
