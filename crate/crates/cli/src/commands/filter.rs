use mbridge::dynamics::FiberModel;
use mbridge::filtering::{
    dynamics_consistency, observation_grid, restart_weights, sigma_invariance_test, simulate_observations,
    wonham_sde_crosscheck,
};
use mbridge::stats::ks_critical_value;
use mbridge::{DiscreteMeasure, Error, Result};
use serde_json::{json, Map};

use super::{config_of, parse_list, read_measure};
use crate::args::FilterArgs;
use crate::output::{floats, Cell, OutputDir, RunManifest};

pub fn run(a: &FilterArgs) -> Result<u8> {
    if a.paths == 0 || a.obs_steps == 0 || !(a.horizon > 0.0) {
        return Err(Error::Field {
            field: "--paths".into(),
            message: "path count, horizon and observation steps must be positive".into(),
        });
    }
    let mut manifest = RunManifest::new("filter", config_of(a));
    manifest.seed = Some(a.seed);
    let sigmas = parse_list("--sigmas", &a.sigmas)?;
    let checkpoints = parse_list("--checkpoints", &a.checkpoints)?;
    let law = match &a.nu {
        Some(path) => {
            let law = read_measure("--nu", path)?.into_discrete()?;
            manifest.input("nu", path, law.to_json());
            law
        }
        None => DiscreteMeasure::one_dimensional(&[0.0, 1.0], &[0.5, 0.5])?,
    };
    let start = match &a.start {
        Some(text) => parse_list("--start", text)?,
        None => law.mean(),
    };
    let fiber = FiberModel::discrete(start, law)?;

    let invariance = sigma_invariance_test(&fiber, &sigmas, &checkpoints, a.paths, a.seed)?;
    let positive: Vec<f64> = checkpoints.iter().copied().filter(|s| *s > 0.0).collect();
    let consistency = positive
        .iter()
        .map(|&s| Ok(json!({ "s": s, "ks": dynamics_consistency(&fiber, s, a.paths, a.seed)? })))
        .collect::<Result<Vec<_>>>()?;

    let grid = observation_grid(a.horizon, a.obs_steps);
    let shown = a.csv_paths.min(a.paths);
    let obs = simulate_observations(&fiber, &grid, shown, a.seed)?;
    let mut restart_gap = 0.0f64;
    for p in &obs.paths {
        let d = obs.dim;
        for (k, &s) in grid.iter().enumerate().skip(1) {
            let z = &p.estimate[k * d..(k + 1) * d];
            let from_z = restart_weights(&fiber, s, z)?;
            let from_path = mbridge::filtering::posterior_estimator(&fiber, s, &p.observation[k * d..(k + 1) * d])?;
            for (x, y) in from_z.iter().zip(&from_path.weights) {
                restart_gap = restart_gap.max((x - y).abs());
            }
        }
    }

    let mut body = Map::new();
    body.insert(
        "sigma_invariance".into(),
        json!({
            "report": invariance,
            "max_ks": invariance.max_ks(),
            "ks_critical_95": ks_critical_value(a.paths, a.paths, 0.05),
        }),
    );
    body.insert("dynamics_consistency".into(), json!(consistency));
    body.insert("restart_max_deviation".into(), json!(restart_gap));
    let bernoulli = a.nu.is_none() && a.start.is_none();
    if bernoulli && !positive.is_empty() {
        let wonham = wonham_sde_crosscheck(a.paths, a.step, &positive, a.seed)?;
        body.insert("wonham".into(), serde_json::to_value(&wonham).expect("serialises"));
    }

    let mut out = OutputDir::create(&a.out)?;
    let d = obs.dim;
    let header: Vec<String> = ["path", "s"]
        .into_iter()
        .map(String::from)
        .chain((0..d).map(|c| format!("R_{c}")))
        .chain((0..d).map(|c| format!("Z_{c}")))
        .collect();
    let rows = obs.paths.iter().flat_map(|p| {
        let grid = &grid;
        (0..grid.len()).map(move |k| {
            let mut row = vec![Cell::Int(p.id), Cell::Float(grid[k])];
            row.extend(floats(p.observation[k * d..(k + 1) * d].iter().copied()));
            row.extend(floats(p.estimate[k * d..(k + 1) * d].iter().copied()));
            row
        })
    });
    out.csv("observations.csv", &header, rows)?;
    let path = out.finish(&manifest, "ok", body)?;
    println!("sigma invariance   max KS {:.4}", invariance.max_ks());
    println!("restart deviation  {restart_gap:.3e}");
    println!("report: {}", path.display());
    Ok(0)
}
