//! Browser bindings: partition-function curves, stopping partitions of
//! planar measures and coarse spectra, each returned as a JSON string.

use std::sync::Arc;

use mfspec_core::adaptive::stopping_partition;
use mfspec_core::catalog;
use mfspec_core::coarse::{default_alpha_grid, CoarseProfile};
use mfspec_core::cube::MAX_LEVEL;
use mfspec_core::partition_fn::{q_grid, TauRows};
use mfspec_core::{Error, MeasureModel, MeasureSpec, Mode, Result, SetFunction, SetFunctionKind};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Cap on the cubes drawn by [`stopping_partition_json`].
const MAX_RECTS: usize = 20_000;

fn measure(spec: &str) -> Result<Arc<MeasureModel>> {
    let spec = match catalog::lookup(spec.trim()) {
        Ok(entry) => entry.spec,
        Err(_) => MeasureSpec::parse(spec)?,
    };
    Ok(Arc::new(spec.build()?))
}

fn spectral(m: Arc<MeasureModel>) -> Result<SetFunction> {
    let j = SetFunction::new(SetFunctionKind::spectral(m.dim()), m)?;
    j.check_admissible()?;
    Ok(j)
}

fn mode(name: &str) -> Result<Mode> {
    match name {
        "neumann" => Ok(Mode::Neumann),
        "dirichlet" => Ok(Mode::Dirichlet),
        other => Err(Error::Config(format!("unknown mode {other:?}"))),
    }
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn to_js(r: Result<Value>) -> std::result::Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

pub fn catalog_value() -> Value {
    Value::Array(
        catalog::entries()
            .iter()
            .map(|e| json!({"name": e.name, "dimension": e.dimension, "description": e.description}))
            .collect(),
    )
}

pub fn tau_curve_value(spec: &str, lo: u32, hi: u32, q_max: f64, mode_name: &str) -> Result<Value> {
    if lo == 0 || lo > hi || hi > 200 {
        return Err(Error::Config(format!("need 1 <= lo <= hi <= 200, got {lo}..{hi}")));
    }
    let j = spectral(measure(spec)?)?;
    let rows = TauRows::build(&j, (lo as u64)..=(hi as u64), mode(mode_name)?)?;
    let qs = q_grid(q_max.clamp(0.5, 20.0), 0.05);
    let levels: Vec<Value> = rows
        .rows()
        .iter()
        .map(|r| json!({"n": r.n(), "tau": qs.iter().map(|&q| finite(r.tau(q))).collect::<Vec<_>>()}))
        .collect();
    let envelope: Vec<Value> = qs.iter().map(|&q| finite(rows.envelope(q))).collect();
    let zero = rows.zero().ok();
    Ok(json!({"q": qs, "levels": levels, "envelope": envelope, "zero": zero}))
}

/// Cubes `[x, y, side, log2 𝔍]` of the stopping partition at `t = 2^-log2_x`.
pub fn stopping_partition_value(spec: &str, log2_x: f64) -> Result<Value> {
    let m = measure(spec)?;
    if m.dim() != 2 {
        return Err(Error::Precondition(format!("drawing needs a planar measure, got d = {}", m.dim())));
    }
    let j = spectral(m)?;
    let p = stopping_partition(&j, -log2_x, MAX_LEVEL, MAX_RECTS)?;
    let rects: Vec<Value> = p
        .cubes
        .iter()
        .map(|c| {
            let (x, _) = c.cube.bounds(0);
            let (y, _) = c.cube.bounds(1);
            json!([x, y, c.cube.side(), finite(c.log2_value)])
        })
        .collect();
    Ok(json!({"rects": rects, "zero_count": p.zero_count}))
}

pub fn coarse_spectrum_value(spec: &str, hi: u32, mode_name: &str) -> Result<Value> {
    if !(4..=14).contains(&hi) {
        return Err(Error::Config(format!("need 4 <= levels <= 14, got {hi}")));
    }
    let j = spectral(measure(spec)?)?;
    let mode = mode(mode_name)?;
    let levels: Vec<u64> = (1..=hi as u64).collect();
    let decay = TauRows::build(&j, levels.iter().copied(), mode)?.decay_exponent();
    let profile = CoarseProfile::build(&j, &levels, &default_alpha_grid(decay), mode)?;
    let dim = profile.dimension()?;
    let spectrum: Vec<Value> = profile
        .spectrum()
        .into_iter()
        .map(|(a, u, l)| json!([a, finite(u), finite(l)]))
        .collect();
    Ok(json!({
        "spectrum": spectrum,
        "f_upper": dim.f_upper,
        "f_lower": dim.f_lower,
        "alpha_star": dim.alpha_star,
    }))
}

#[wasm_bindgen]
pub fn catalog_json() -> String {
    catalog_value().to_string()
}

/// `τ_n(q)` rows for levels `lo..=hi`, their envelope and its zero.
#[wasm_bindgen]
pub fn tau_curve(spec: &str, lo: u32, hi: u32, q_max: f64, mode: &str) -> std::result::Result<String, JsError> {
    to_js(tau_curve_value(spec, lo, hi, q_max, mode))
}

#[wasm_bindgen]
pub fn stopping_partition_json(spec: &str, log2_x: f64) -> std::result::Result<String, JsError> {
    to_js(stopping_partition_value(spec, log2_x))
}

#[wasm_bindgen]
pub fn coarse_spectrum(spec: &str, levels: u32, mode: &str) -> std::result::Result<String, JsError> {
    to_js(coarse_spectrum_value(spec, levels, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau_curve_for_lebesgue() {
        let v = tau_curve_value("lebesgue-3", 1, 4, 3.0, "neumann").unwrap();
        assert!((v["zero"].as_f64().unwrap() - 1.5).abs() < 1e-9);
        assert_eq!(v["levels"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn partition_rects_tile_the_square() {
        let v = stopping_partition_value("lebesgue-2", 6.0).unwrap();
        let area: f64 = v["rects"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r[2].as_f64().unwrap().powi(2))
            .sum();
        assert!((area - 1.0).abs() < 1e-12);
        assert!(stopping_partition_value("lebesgue-3", 6.0).is_err());
    }

    #[test]
    fn coarse_spectrum_and_inline_specs() {
        let v = coarse_spectrum_value("sierpinski-tetraeder", 8, "neumann").unwrap();
        assert!(v["f_upper"].as_f64().unwrap() > 1.0);
        let inline = r#"{"kind":"cascade","dimension":2,"refinement":1,"weights":["1/2","1/4","1/8","1/8"]}"#;
        assert!(tau_curve_value(inline, 1, 6, 3.0, "neumann").is_ok());
        assert!(tau_curve_value("no-such", 1, 2, 3.0, "neumann").is_err());
        assert!(catalog_value().as_array().unwrap().len() >= 10);
    }
}
