//! Browser bindings: certify a family, price it, and build a counterexample
//! menu. Every entry point takes and returns JSON strings.

use serde::Deserialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use screenlab::conditions::{certify, CertifyGrid, CheckOptions, Mode};
use screenlab::dist::{build_grid, favorite_marginal, to_sum_ratio, CurveSamples, FamilySpec, SumSource};
use screenlab::pricing::{construct_additive_counterexample, construct_counterexample, optimal_bundle_price, optimal_uniform_price};

/// Kept small so a page interaction stays interactive.
const MAX_RESOLUTION: usize = 257;

#[derive(Deserialize)]
struct Request {
    distribution: FamilySpec,
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(default = "default_mode")]
    mode: Mode,
    #[serde(default)]
    cost: f64,
}

fn default_resolution() -> usize {
    65
}

fn default_mode() -> Mode {
    Mode::UnitDemand
}

fn parse(req: &str) -> Result<Request, String> {
    let r: Request = serde_json::from_str(req).map_err(|e| e.to_string())?;
    if matches!(r.distribution, FamilySpec::RawGrid { .. }) {
        return Err("file-backed grids are not available in the browser".into());
    }
    if !(8..=MAX_RESOLUTION).contains(&r.resolution) {
        return Err(format!("resolution must lie in [8, {MAX_RESOLUTION}]"));
    }
    Ok(r)
}

pub fn certify_json(req: &str) -> Result<String, String> {
    let r = parse(req)?;
    let res = (r.resolution, r.resolution);
    let opts = CheckOptions::default();
    let report = match r.mode {
        Mode::Additive => {
            let g = to_sum_ratio(SumSource::Spec(&r.distribution), res).map_err(|e| e.to_string())?;
            certify(CertifyGrid::Sum(&g), r.mode, &opts)
        }
        _ => {
            let g = build_grid(&r.distribution, res).map_err(|e| e.to_string())?;
            certify(CertifyGrid::Max(&g), r.mode, &opts)
        }
    };
    report.map(|r| r.to_json()).map_err(|e| e.to_string())
}

/// Best uniform price (unit demand) or grand-bundle price (additive).
pub fn price_json(req: &str) -> Result<String, String> {
    let r = parse(req)?;
    let res = (r.resolution, r.resolution);
    let (kind, p) = match r.mode {
        Mode::Additive => {
            let g = to_sum_ratio(SumSource::Spec(&r.distribution), res).map_err(|e| e.to_string())?;
            ("bundle", optimal_bundle_price(&g.sum_marginal(), r.cost))
        }
        _ => {
            let g = build_grid(&r.distribution, res).map_err(|e| e.to_string())?;
            ("uniform", optimal_uniform_price(&favorite_marginal(&g), r.cost))
        }
    };
    let p = p.map_err(|e| e.to_string())?;
    Ok(json!({"kind": kind, "price": p.price, "revenue": p.revenue, "sells": p.sells}).to_string())
}

#[derive(Deserialize)]
struct CounterexampleRequest {
    curve: CurveSamples,
    point: f64,
    #[serde(default = "default_mode")]
    mode: Mode,
}

pub fn counterexample_json(req: &str) -> Result<String, String> {
    let r: CounterexampleRequest = serde_json::from_str(req).map_err(|e| e.to_string())?;
    let out = match r.mode {
        Mode::Additive => {
            let ce = construct_additive_counterexample(&r.curve, r.point).map_err(|e| e.to_string())?;
            json!({"menu": ce.menu.options, "simple_revenue": ce.bundle_revenue, "menu_revenue": ce.menu_revenue, "gain": ce.gain})
        }
        _ => {
            let ce = construct_counterexample(&r.curve, r.point).map_err(|e| e.to_string())?;
            json!({"menu": ce.menu.options, "simple_revenue": ce.uniform_revenue, "menu_revenue": ce.menu_revenue, "gain": ce.gain})
        }
    };
    Ok(out.to_string())
}

#[wasm_bindgen(js_name = certifyFamily)]
pub fn certify_family(req: &str) -> Result<String, JsError> {
    certify_json(req).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = optimalPrice)]
pub fn optimal_price(req: &str) -> Result<String, JsError> {
    price_json(req).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = counterexample)]
pub fn counterexample(req: &str) -> Result<String, JsError> {
    counterexample_json(req).map_err(|e| JsError::new(&e))
}
