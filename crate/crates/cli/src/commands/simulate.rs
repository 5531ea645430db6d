use mbridge::dynamics::{
    fibers_from_coupling, phi_bijection_check, randomize_over_mu, simulate_follmer_euler, simulate_follmer_martingale,
    EnergyRule, FiberModel, PathEnsemble, SimulationOptions, TerminalLaw,
};
use mbridge::gaussian::{uniform_grid, weighted_energy_closed_form};
use mbridge::stats::{binned_increment_z_score, ks_two_sample, mean_and_standard_error, total_variation};
use mbridge::{sinkhorn_msb, DiscreteMeasure, Error, MeasureDocument, Result, SolverConfig};
use serde_json::{json, Map, Value};

use super::{config_of, parse_list, parse_matrix, read_measure};
use crate::args::{Rule, SimulateArgs};
use crate::output::{floats, Cell, OutputDir, RunManifest};

const Z_BINS: usize = 5;

enum Setup {
    Single(FiberModel),
    Bridge {
        mu: DiscreteMeasure,
        nu: DiscreteMeasure,
        fibers: Vec<FiberModel>,
    },
}

fn field(name: &str, message: &str) -> Error {
    Error::Field {
        field: name.to_string(),
        message: message.to_string(),
    }
}

fn setup(a: &SimulateArgs, manifest: &mut RunManifest) -> Result<Setup> {
    let start = a.start.as_deref().map(|s| parse_list("--start", s)).transpose()?;
    if let Some(text) = &a.delta {
        let delta = parse_matrix("--delta", text)?;
        let x = start.unwrap_or_else(|| vec![0.0; delta.nrows()]);
        return Ok(Setup::Single(FiberModel::gaussian(x, delta)?.with_sigma(a.sigma)?));
    }
    let nu_path = a.nu.as_ref().ok_or_else(|| field("--nu", "either --delta or --nu is required"))?;
    let nu_doc = read_measure("--nu", nu_path)?;
    manifest.input("nu", nu_path, nu_doc.to_value());
    if let Some(mu_path) = &a.mu {
        let mu = read_measure("--mu", mu_path)?.into_discrete()?;
        manifest.input("mu", mu_path, mu.to_json());
        let nu = nu_doc.into_discrete()?;
        let report = sinkhorn_msb(&mu, &nu, &SolverConfig::default())?;
        if !report.converged {
            return Err(Error::NotConverged {
                context: "martingale Sinkhorn".into(),
                iterations: report.iterations,
                residual: report.marginal_residual.max(report.martingale_residual),
            });
        }
        manifest.iterations = Some(report.iterations);
        let fibers = fibers_from_coupling(&report.coupling)?
            .into_iter()
            .map(|f| f.with_sigma(a.sigma))
            .collect::<Result<_>>()?;
        return Ok(Setup::Bridge { mu, nu, fibers });
    }
    let fiber = match nu_doc {
        MeasureDocument::Discrete(law) => {
            let x = start.unwrap_or_else(|| law.mean());
            FiberModel::discrete(x, law)?
        }
        MeasureDocument::Gaussian(g) => {
            if start.is_some() {
                return Err(field("--start", "a Gaussian fiber starts at the mean of --nu"));
            }
            FiberModel::gaussian(g.mean().to_vec(), g.covariance().clone())?
        }
    };
    Ok(Setup::Single(fiber.with_sigma(a.sigma)?))
}

fn record_times(a: &SimulateArgs, grid: &[f64]) -> Result<Vec<f64>> {
    match &a.record {
        Some(text) => parse_list("--record", text),
        None => {
            let mut idx: Vec<usize> = (0..=10).map(|k| (k * a.steps + 5) / 10).collect();
            idx.dedup();
            Ok(idx.into_iter().map(|k| grid[k]).collect())
        }
    }
}

fn terminal_summary(e: &PathEnsemble, target: Option<&DiscreteMeasure>) -> Value {
    let d = e.dim;
    match target {
        Some(nu) => {
            let mut freq = vec![0.0; nu.len()];
            let mut off_support = 0usize;
            for p in &e.paths {
                match nu.find_atom(&p.terminal, 1e-9) {
                    Some(j) => freq[j] += 1.0 / e.len() as f64,
                    None => off_support += 1,
                }
            }
            json!({
                "frequencies": freq,
                "target": nu.weights(),
                "total_variation": total_variation(&freq, nu.weights()),
                "off_support": off_support,
            })
        }
        None => {
            let mean: Vec<Value> = (0..d)
                .map(|c| {
                    let col: Vec<f64> = e.paths.iter().map(|p| p.terminal[c]).collect();
                    let (m, se) = mean_and_standard_error(&col);
                    json!({ "mean": m, "se": se })
                })
                .collect();
            let n = e.len() as f64;
            let mut cov = vec![vec![0.0; d]; d];
            let mu: Vec<f64> = (0..d).map(|c| e.paths.iter().map(|p| p.terminal[c]).sum::<f64>() / n).collect();
            for p in &e.paths {
                for r in 0..d {
                    for c in 0..d {
                        cov[r][c] += (p.terminal[r] - mu[r]) * (p.terminal[c] - mu[c]) / (n - 1.0);
                    }
                }
            }
            json!({ "mean": mean, "covariance": cov })
        }
    }
}

pub fn run(a: &SimulateArgs) -> Result<u8> {
    if a.paths == 0 || a.steps == 0 {
        return Err(field(if a.paths == 0 { "--paths" } else { "--steps" }, "must be positive"));
    }
    let mut manifest = RunManifest::new("simulate", config_of(a));
    manifest.seed = Some(a.seed);
    let setup = setup(a, &mut manifest)?;
    let grid = uniform_grid(a.steps);
    let times = record_times(a, &grid)?;
    let options = SimulationOptions {
        energy_clip: a.clip,
        ..SimulationOptions::default()
            .recording(times.clone())
            .with_rule(match a.rule {
                Rule::Left => EnergyRule::LeftEndpoint,
                Rule::Stratified => EnergyRule::StratifiedRandom,
            })
    };
    let (ensemble, target) = match &setup {
        Setup::Single(f) => {
            let target = match f.law() {
                TerminalLaw::Discrete(law) => Some(law.clone()),
                TerminalLaw::Gaussian { .. } => None,
            };
            (simulate_follmer_martingale(f, &grid, a.paths, a.seed, &options)?, target)
        }
        Setup::Bridge { mu, nu, fibers } => (
            randomize_over_mu(mu, fibers, nu, &grid, a.paths, a.seed, &options)?,
            Some(nu.clone()),
        ),
    };
    let check = phi_bijection_check(&ensemble)?;
    let d = ensemble.dim;

    let mut z_scores = Vec::new();
    for slot in 1..times.len().saturating_sub(1) {
        for c in 0..d {
            let z = binned_increment_z_score(
                &ensemble.martingale_column(slot, c),
                &ensemble.martingale_column(slot + 1, c),
                Z_BINS,
            );
            z_scores.push(json!({ "from": times[slot], "to": times[slot + 1], "coordinate": c, "z": z }));
        }
    }

    let mut body = Map::new();
    let (drift, drift_se) = ensemble.drift_energy();
    let (mart, mart_se) = ensemble.mart_energy();
    body.insert(
        "energies".into(),
        json!({
            "rule": ensemble.energy_rule,
            "clip": a.clip,
            "drift": { "mean": drift, "se": drift_se },
            "martingale": { "mean": mart, "se": mart_se },
            "per_fiber": ensemble.fiber_energies(),
            "aggregated": ensemble.aggregated_energy(),
        }),
    );
    body.insert("bijection".into(), serde_json::to_value(check).expect("serialises"));
    body.insert("terminal".into(), terminal_summary(&ensemble, target.as_ref()));
    body.insert("martingale_z_scores".into(), json!(z_scores));
    body.insert("record_times".into(), json!(ensemble.record_times()));
    if let Setup::Single(f) = &setup {
        if let TerminalLaw::Gaussian { delta, .. } = f.law() {
            body.insert("weighted_energy_closed_form".into(), json!(weighted_energy_closed_form(delta)?));
        }
    }
    if a.euler {
        let Setup::Single(f) = &setup else {
            return Err(field("--euler", "the Euler cross-check needs a single fiber"));
        };
        let euler = simulate_follmer_euler(f, &grid, a.paths, a.seed, Some(&times))?;
        let times = &times;
        let ks: Vec<Value> = (0..times.len())
            .flat_map(|slot| {
                let (euler, ensemble) = (&euler, &ensemble);
                (0..d).map(move |c| {
                    json!({
                        "t": times[slot],
                        "coordinate": c,
                        "ks": ks_two_sample(&ensemble.drifted_column(slot, c), &euler.column(slot, c)),
                    })
                })
            })
            .collect();
        body.insert("euler_ks".into(), json!(ks));
    }

    let mut out = OutputDir::create(&a.out)?;
    let header: Vec<String> = ["path", "fiber", "t"]
        .into_iter()
        .map(String::from)
        .chain((0..d).map(|c| format!("M_{c}")))
        .chain((0..d).map(|c| format!("X_{c}")))
        .collect();
    let shown = a.csv_paths.min(ensemble.len());
    let rows = (0..shown).flat_map(|p| {
        let ensemble = &ensemble;
        let times = &times;
        (0..times.len()).map(move |slot| {
            let path = &ensemble.paths[p];
            let mut row = vec![Cell::Int(path.id), Cell::Int(path.fiber as u64), Cell::Float(times[slot])];
            row.extend(floats(ensemble.martingale_point(p, slot).iter().copied()));
            row.extend(floats(ensemble.drifted_point(p, slot).iter().copied()));
            row
        })
    });
    out.csv("paths.csv", &header, rows)?;
    out.csv(
        "energies.csv",
        &["path".to_string(), "fiber".to_string(), "drift".to_string(), "martingale".to_string()],
        ensemble.paths.iter().map(|p| {
            vec![
                Cell::Int(p.id),
                Cell::Int(p.fiber as u64),
                Cell::Float(p.drift_energy),
                Cell::Float(p.mart_energy),
            ]
        }),
    )?;
    let path = out.finish(&manifest, "ok", body)?;
    println!("paths              {}", ensemble.len());
    println!("drift energy       {drift:.6} ± {drift_se:.2e}");
    println!("martingale energy  {mart:.6} ± {mart_se:.2e}");
    println!("bijection gap      {:.3e}", check.discrepancy);
    println!("report: {}", path.display());
    Ok(0)
}
