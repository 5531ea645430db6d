//! Browser bindings. Each export takes plain numbers, returns a JSON string
//! and maps errors to a JS exception. The `*_json` functions carry the logic
//! and are tested natively.

use mbridge::dynamics::{simulate_follmer_martingale, FiberModel, SimulationOptions};
use mbridge::gaussian::{
    bass_comparison_for_delta, gaussian_msb_closed_form, spectral_time_change, uniform_grid, weighted_energy_closed_form,
};
use mbridge::threepoint::{bass_minimize, entropy_minimize, ThreePointInstance};
use mbridge::{DiscreteMeasure, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Upper limits that keep a single call responsive in the browser.
pub const MAX_PATHS: usize = 20_000;
pub const MAX_STEPS: usize = 2_000;
pub const MAX_DRAWN_PATHS: usize = 200;

pub fn three_point_json(p1: f64, q1: f64, p2: f64, q2: f64) -> Result<String> {
    let inst = ThreePointInstance::new(p1, q1, p2, q2)?;
    let e = entropy_minimize(&inst)?;
    let b = bass_minimize(&inst)?;
    let (u, v, radius) = inst.chebyshev_center()?;
    Ok(json!({
        "instance": inst,
        "entropy": { "u": e.u, "v": e.v, "matrix": e.matrix, "value": e.value },
        "bass": { "u": b.optimum.u, "v": b.optimum.v, "matrix": b.optimum.matrix, "value": b.optimum.value },
        "gap": [e.u - b.optimum.u, e.v - b.optimum.v],
        "route_gap": b.route_gap,
        "chebyshev_center": [u, v, radius],
    })
    .to_string())
}

fn diagonal(values: &[f64], name: &str) -> Result<DMatrix<f64>> {
    if values.is_empty() {
        return Err(Error::Field {
            field: name.into(),
            message: "at least one variance is required".into(),
        });
    }
    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
}

/// Closed form for diagonal Σ₀, Σ₁ and the per-eigenvalue schedules on a
/// uniform grid of `steps` intervals.
pub fn gaussian_schedule_json(sigma0: &[f64], sigma1: &[f64], steps: usize) -> Result<String> {
    let steps = steps.clamp(1, MAX_STEPS);
    let s0 = diagonal(sigma0, "sigma0")?;
    let s1 = diagonal(sigma1, "sigma1")?;
    let g = gaussian_msb_closed_form(&s0, &s1)?;
    let grid = uniform_grid(steps);
    let bass = bass_comparison_for_delta(&g.delta, &grid)?;
    let lambdas = &g.delta_eigenvalues;
    let volatility: Vec<Vec<f64>> = grid
        .iter()
        .map(|&t| lambdas.iter().map(|&l| l / (1.0 - t + t * l)).collect())
        .collect();
    let tau: Vec<Vec<f64>> = grid
        .iter()
        .map(|&t| lambdas.iter().map(|&l| spectral_time_change(l, t)).collect())
        .collect();
    Ok(json!({
        "entropy_value": g.entropy_value,
        "weighted_energy": weighted_energy_closed_form(&g.delta)?,
        "eigenvalues": lambdas,
        "grid": grid,
        "volatility": volatility,
        "time_change": tau,
        "follmer_variance": bass.follmer_schedule,
        "bass_variance": bass.bass_schedule,
        "max_discrepancy": bass.max_discrepancy,
    })
    .to_string())
}

/// One-dimensional fiber started at the barycenter of the given law.
pub fn follmer_paths_json(atoms: &[f64], weights: &[f64], n_paths: usize, steps: usize, seed: u64) -> Result<String> {
    let n_paths = n_paths.clamp(1, MAX_PATHS);
    let steps = steps.clamp(1, MAX_STEPS);
    let law = DiscreteMeasure::one_dimensional(atoms, weights)?;
    let x = law.mean();
    let fiber = FiberModel::discrete(x.clone(), law.clone())?;
    let grid = uniform_grid(steps);
    let opts = SimulationOptions::default().recording(grid.clone());
    let e = simulate_follmer_martingale(&fiber, &grid, n_paths, seed, &opts)?;
    let drawn = n_paths.min(MAX_DRAWN_PATHS);
    let martingale: Vec<Vec<f64>> = e.paths[..drawn].iter().map(|p| p.martingale.clone()).collect();
    let drifted: Vec<Vec<f64>> = e.paths[..drawn].iter().map(|p| p.drifted.clone()).collect();
    let mut frequencies = vec![0.0; law.len()];
    for p in &e.paths {
        if let Some(j) = law.find_atom(&p.terminal, 1e-9) {
            frequencies[j] += 1.0 / n_paths as f64;
        }
    }
    let (drift, drift_se) = e.drift_energy();
    Ok(json!({
        "start": x[0],
        "atoms": atoms,
        "weights": law.weights(),
        "grid": grid,
        "martingale": martingale,
        "drifted": drifted,
        "terminal_frequencies": frequencies,
        "drift_energy": [drift, drift_se],
        "n_paths": n_paths,
    })
    .to_string())
}

fn to_js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn three_point(p1: f64, q1: f64, p2: f64, q2: f64) -> std::result::Result<String, JsValue> {
    to_js(three_point_json(p1, q1, p2, q2))
}

#[wasm_bindgen]
pub fn gaussian_schedule(sigma0: Vec<f64>, sigma1: Vec<f64>, steps: usize) -> std::result::Result<String, JsValue> {
    to_js(gaussian_schedule_json(&sigma0, &sigma1, steps))
}

#[wasm_bindgen]
pub fn follmer_paths(
    atoms: Vec<f64>,
    weights: Vec<f64>,
    n_paths: usize,
    steps: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(follmer_paths_json(&atoms, &weights, n_paths, steps, u64::from(seed)))
}
