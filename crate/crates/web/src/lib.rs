//! wasm-bindgen bindings behind the static page in `www/`.
//!
//! Every export returns a JSON string; the plain functions underneath are
//! ordinary Rust so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cloaksim::experiments::{fit_tail, geometric_grid, run_sweep, Column, Scenario, SweepRecord};
use cloaksim::specfun::{resonant_frequencies, ZeroOptions};
use cloaksim::transform::{cloak_material, equivalent_material, TransformMap};
use nalgebra::Vector3;

const MAX_SAMPLES: usize = 20_000;

#[derive(Debug, Serialize)]
pub struct ProfileRow {
    pub radius: f64,
    pub eigen_radial: f64,
    pub eigen_tangential: f64,
    pub region: &'static str,
}

/// Material eigenvalues on `[0, 3]`; with `equivalent` the small-inclusion
/// medium at the preimage of each radius.
pub fn profile(rho: f64, samples: usize, equivalent: bool) -> Result<Vec<ProfileRow>, String> {
    if !(2..=MAX_SAMPLES).contains(&samples) {
        return Err(format!("samples must lie in 2..={MAX_SAMPLES}"));
    }
    let map = TransformMap::new(rho).map_err(|e| e.to_string())?;
    (0..samples)
        .map(|i| {
            let radius = 3.0 * i as f64 / (samples - 1) as f64;
            let y = Vector3::new(radius, 0.0, 0.0);
            let mm = if equivalent {
                equivalent_material(rho, &map.eval_finv(&y))
            } else {
                cloak_material(rho, &y)
            }
            .map_err(|e| e.to_string())?;
            Ok(ProfileRow {
                radius,
                eigen_radial: mm.eigen_radial,
                eigen_tangential: mm.eigen_tangential,
                region: mm.region.name(),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct SweepResult {
    pub scenario: Scenario,
    pub omega: f64,
    pub records: Vec<SweepRecord>,
    pub slope: f64,
    pub r_squared: f64,
    pub interior_slope: f64,
}

/// Halving sweep from `ρ = 1/16` with the scenario's default source.
pub fn sweep(scenario: &str, omega: f64, steps: usize) -> Result<SweepResult, String> {
    let scenario: Scenario = scenario.parse().map_err(|e: cloaksim::experiments::ExperimentError| e.to_string())?;
    if !(5..=16).contains(&steps) {
        return Err("steps must lie in 5..=16".into());
    }
    let omega = if scenario.is_resonant() { nearest_resonance(omega).unwrap_or(omega) } else { omega };
    let (n, m) = scenario.default_mode();
    let source = scenario.default_source(n, m).map_err(|e| e.to_string())?;
    let records = run_sweep(scenario, omega, &geometric_grid(0.0625, 0.5, steps), &source).map_err(|e| e.to_string())?;
    let fit = fit_tail(&records, Column::Exterior).map_err(|e| e.to_string())?;
    let interior = fit_tail(&records, Column::Interior).map_err(|e| e.to_string())?;
    Ok(SweepResult {
        scenario,
        omega,
        records,
        slope: fit.slope,
        r_squared: fit.r_squared,
        interior_slope: interior.slope,
    })
}

/// Zero of some `j_n`, `n <= 8`, within `1e-3` of `omega`.
fn nearest_resonance(omega: f64) -> Option<f64> {
    resonant_frequencies(8, omega + 1.0, ZeroOptions::default())
        .into_iter()
        .map(|z| z.x)
        .filter(|x| (x - omega).abs() <= 1e-3)
        .min_by(|a, b| (a - omega).abs().total_cmp(&(b - omega).abs()))
}

#[derive(Debug, Serialize)]
pub struct ZeroRow {
    pub n: u32,
    pub k: u32,
    pub omega: f64,
}

pub fn resonances(n_max: u32, omega_max: f64) -> Result<Vec<ZeroRow>, String> {
    if !(1..=64).contains(&n_max) {
        return Err("n_max must lie in 1..=64".into());
    }
    if !(omega_max > 0.0 && omega_max <= 100.0) {
        return Err("omega_max must lie in (0, 100]".into());
    }
    Ok(resonant_frequencies(n_max, omega_max, ZeroOptions::default())
        .into_iter()
        .map(|z| ZeroRow { n: z.n, k: z.k, omega: z.x })
        .collect())
}

fn to_json<T: Serialize>(v: Result<T, String>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn material_profile(rho: f64, samples: usize, equivalent: bool) -> Result<String, JsError> {
    to_json(profile(rho, samples, equivalent))
}

#[wasm_bindgen]
pub fn visibility_sweep(scenario: &str, omega: f64, steps: usize) -> Result<String, JsError> {
    to_json(sweep(scenario, omega, steps))
}

#[wasm_bindgen]
pub fn resonance_table(n_max: u32, omega_max: f64) -> Result<String, JsError> {
    to_json(resonances(n_max, omega_max))
}
