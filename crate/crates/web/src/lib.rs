//! Browser bindings: Rankine–Hugoniot roots, traveling-wave profiles and
//! Evans-function verdicts for the Burgers-flux model with u₊ and the
//! ignition window of the reference configuration.
//!
//! Every operation returns a JSON string; errors become a JS exception with
//! the message.

use combust::evans::{analyze, EvansOptions};
use combust::hugoniot::{cj_speeds, solve_rh};
use combust::model::validate;
use combust::profile::{compute_profile, transversality_gamma, ProfileOptions};
use combust::spectral::SpectralProblem;
use combust::{ModelParams, WaveClass, WaveProblem};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Profile samples returned to the page.
const MAX_POINTS: usize = 600;

fn model(q: f64, k: f64, d: f64) -> Result<ModelParams, String> {
    let p = ModelParams { q, k, d, ..ModelParams::dc() };
    let rep = validate(&p);
    if let Some(v) = rep.violations.first() {
        return Err(format!("model violates {} ({})", v.hypothesis, v.detail));
    }
    Ok(p)
}

fn wave(p: &ModelParams, s: f64) -> Result<WaveProblem, String> {
    WaveProblem::from_speed(p, 0.0, s, WaveClass::StrongDetonation).map_err(|e| e.to_string())
}

/// RH roots u₋ at speed s and the CJ speeds, for u₊ = 0.
pub fn rh_json(q: f64, s: f64) -> Result<Value, String> {
    let p = model(q, 1.0, 0.2)?;
    let roots = solve_rh(&p, 0.0, s).map_err(|e| e.to_string())?;
    Ok(json!({ "roots": roots, "cj": cj_speeds(&p, 0.0) }))
}

/// Strong-detonation profile (ξ, u, z), downsampled for plotting.
pub fn profile_json(q: f64, k: f64, d: f64, s: f64) -> Result<Value, String> {
    let p = model(q, k, d)?;
    let w = wave(&p, s)?;
    let pr = compute_profile(&w, &p, &ProfileOptions::default()).map_err(|e| e.to_string())?;
    let step = pr.len().div_ceil(MAX_POINTS).max(1);
    let idx: Vec<usize> = (0..pr.len()).step_by(step).collect();
    Ok(json!({
        "u_minus": w.u_minus,
        "xi": idx.iter().map(|&i| pr.xi(i)).collect::<Vec<_>>(),
        "u": idx.iter().map(|&i| pr.w[i][0]).collect::<Vec<_>>(),
        "z": idx.iter().map(|&i| pr.w[i][1]).collect::<Vec<_>>(),
        "residual": pr.residual,
        "gamma": transversality_gamma(&pr).ok(),
    }))
}

/// Stability verdict plus the image of the outer contour under D.
pub fn stability_json(q: f64, k: f64, d: f64, s: f64) -> Result<Value, String> {
    let p = model(q, k, d)?;
    let w = wave(&p, s)?;
    let pr = compute_profile(&w, &p, &ProfileOptions::default()).map_err(|e| e.to_string())?;
    let sp = SpectralProblem::new(&pr);
    let gamma = transversality_gamma(&pr).ok();
    let (rep, outer, _) = analyze(&sp, gamma, &EvansOptions::default()).map_err(|e| e.to_string())?;
    let scaled: Vec<[f64; 2]> = outer
        .values
        .iter()
        .map(|v| {
            let m = v.norm();
            if m > 0.0 {
                [v.re / m.sqrt(), v.im / m.sqrt()]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    Ok(json!({
        "report": rep,
        "contour": outer.nodes.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
        "image": scaled,
    }))
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rh(q: f64, s: f64) -> Result<String, JsError> {
    to_js(rh_json(q, s))
}

#[wasm_bindgen]
pub fn profile(q: f64, k: f64, d: f64, s: f64) -> Result<String, JsError> {
    to_js(profile_json(q, k, d, s))
}

#[wasm_bindgen]
pub fn stability(q: f64, k: f64, d: f64, s: f64) -> Result<String, JsError> {
    to_js(stability_json(q, k, d, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rh_has_dc_roots() {
        let v = rh_json(0.5, 1.5).unwrap();
        let roots = v["roots"].as_array().unwrap();
        assert_eq!(roots.len(), 2);
        assert!((v["cj"]["detonation"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_model() {
        assert!(rh_json(0.5, 1.5).is_ok());
        assert!(profile_json(0.5, -1.0, 0.2, 1.5).is_err());
    }
}
