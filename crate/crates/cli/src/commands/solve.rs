use mbridge::measures::gaussian_reference_identity_check;
use mbridge::solver::{classical_sinkhorn_sp, dual_value, extract_base_measure, gibbs_residual, vp_components};
use mbridge::{sinkhorn_msb, Coupling, DiscreteMeasure, Result, SolveReport, SolverConfig};
use serde_json::{json, Map, Value};

use super::{config_of, object, read_measure};
use crate::args::SolveArgs;
use crate::output::{floats, Cell, OutputDir, RunManifest};

const DUALITY_TOLERANCE: f64 = 1e-8;
const VP_TOLERANCE: f64 = 1e-7;
const CONDITIONAL_TOLERANCE: f64 = 1e-8;
const SCHRODINGER_TOLERANCE: f64 = 1e-10;
const IDENTITY_TOLERANCE: f64 = 1e-10;

struct Instance {
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    config: SolverConfig,
    manifest: RunManifest,
}

fn load(a: &SolveArgs, command: &str) -> Result<Instance> {
    let mu = read_measure("--mu", &a.mu)?.into_discrete()?;
    let nu = read_measure("--nu", &a.nu)?.into_discrete()?;
    let config = SolverConfig {
        marginal_tolerance: a.tol,
        martingale_tolerance: a.tol,
        max_outer_iterations: a.max_iter,
        ..SolverConfig::default()
    };
    let mut manifest = RunManifest::new(command, json!({ "solver": config, "args": config_of(a) }));
    manifest.input("mu", &a.mu, mu.to_json());
    manifest.input("nu", &a.nu, nu.to_json());
    Ok(Instance { mu, nu, config, manifest })
}

fn write_solution(out: &mut OutputDir, r: &SolveReport) -> Result<Map<String, Value>> {
    let m = &r.coupling;
    let header: Vec<String> = std::iter::once("i".to_string())
        .chain((0..m.cols()).map(|j| format!("m_{j}")))
        .collect();
    out.csv(
        "coupling.csv",
        &header,
        (0..m.rows()).map(|i| {
            let mut row = vec![Cell::Int(i as u64)];
            row.extend(floats(m.row(i).iter().copied()));
            row
        }),
    )?;
    let d = m.source().dim();
    let header: Vec<String> = ["i".to_string(), "phi".to_string()]
        .into_iter()
        .chain((0..d).map(|c| format!("h_{c}")))
        .collect();
    out.csv(
        "source_potentials.csv",
        &header,
        (0..m.rows()).map(|i| {
            let mut row = vec![Cell::Int(i as u64), Cell::Float(r.potentials.phi[i])];
            row.extend(floats(r.potentials.h[i].iter().copied()));
            row
        }),
    )?;
    out.csv(
        "target_potentials.csv",
        &["j".to_string(), "psi".to_string()],
        r.potentials.psi.iter().enumerate().map(|(j, p)| vec![Cell::Int(j as u64), Cell::Float(*p)]),
    )?;
    Ok(object(json!({
        "converged": r.converged,
        "iterations": r.iterations,
        "values": { "primal": r.primal_value, "dual": r.dual_value },
        "residuals": { "marginal": r.marginal_residual, "martingale": r.martingale_residual },
        "coupling": m.to_rows(),
        "potentials": { "phi": r.potentials.phi, "psi": r.potentials.psi, "h": r.potentials.h },
        "dual_history": r.dual_history,
    })))
}

pub fn run(a: &SolveArgs) -> Result<u8> {
    let Instance { mu, nu, config, mut manifest } = load(a, "solve")?;
    let report = sinkhorn_msb(&mu, &nu, &config)?;
    manifest.iterations = Some(report.iterations);
    let mut out = OutputDir::create(&a.out)?;
    let body = write_solution(&mut out, &report)?;
    let status = if report.converged { "converged" } else { "not_converged" };
    let path = out.finish(&manifest, status, body)?;
    println!(
        "{status} after {} iterations: H = {:.12e}, residuals {:.2e} / {:.2e}",
        report.iterations, report.primal_value, report.marginal_residual, report.martingale_residual
    );
    println!("report: {}", path.display());
    Ok(if report.converged { 0 } else { 2 })
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.value < self.tolerance
    }

    fn to_json(&self) -> Value {
        json!({ "value": self.value, "tolerance": self.tolerance, "passed": self.passed() })
    }
}

pub fn certify(a: &SolveArgs) -> Result<u8> {
    let Instance { mu, nu, config, mut manifest } = load(a, "certify")?;
    let report = sinkhorn_msb(&mu, &nu, &config)?;
    manifest.iterations = Some(report.iterations);
    let mut out = OutputDir::create(&a.out)?;
    let mut body = write_solution(&mut out, &report)?;
    if !report.converged {
        out.finish(&manifest, "not_converged", body)?;
        println!("not converged after {} iterations; nothing certified", report.iterations);
        return Ok(2);
    }

    // The dual is re-evaluated from ψ alone, through fresh inner solves.
    let dual = dual_value(&report.potentials.psi, &mu, &nu, &config)?;
    let base = extract_base_measure(&report, &mu)?;
    let vp = vp_components(&base, &mu, &nu)?;
    let classical = classical_sinkhorn_sp(&base, &nu)?;
    let (ss1, ss2) = classical.system_residuals();
    let mut conditional_gap = 0.0f64;
    for (i, h) in report.potentials.h.iter().enumerate() {
        let k = base.find_atom(h, 1e-12).expect("every h(x) is an atom of the base measure");
        for (a, b) in report.coupling.conditional(i).iter().zip(classical.conditional(k)) {
            conditional_gap = conditional_gap.max((a - b).abs());
        }
    }
    // The identity is exact on MT(μ, ν̃) with ν̃ the coupling's own column
    // marginal; against ν it also carries the solver's marginal residual.
    let own = DiscreteMeasure::new(nu.atoms().map(<[f64]>::to_vec).collect(), report.coupling.column_sums())?;
    let exact = Coupling::new(mu.clone(), own.clone(), report.coupling.weights().to_vec())?;
    let identity = gaussian_reference_identity_check(&exact, &own)?;
    let nominal = gaussian_reference_identity_check(&report.coupling, &nu)?;
    let checks = [
        Check {
            name: "primal_dual",
            value: (report.primal_value - dual).abs(),
            tolerance: DUALITY_TOLERANCE,
        },
        Check {
            name: "primal_variational",
            value: (report.primal_value - vp.value).abs(),
            tolerance: VP_TOLERANCE,
        },
        Check {
            name: "conditionals",
            value: conditional_gap,
            tolerance: CONDITIONAL_TOLERANCE,
        },
        Check {
            name: "schrodinger_system",
            value: ss1.max(ss2),
            tolerance: SCHRODINGER_TOLERANCE,
        },
        Check {
            name: "reference_identity",
            value: identity.residual,
            tolerance: IDENTITY_TOLERANCE,
        },
    ];
    let all = checks.iter().all(Check::passed);
    let mut table = Map::new();
    for c in &checks {
        table.insert(c.name.to_string(), c.to_json());
    }
    body.insert(
        "certificate".into(),
        json!({
            "values": {
                "primal": report.primal_value,
                "dual": dual,
                "variational": vp.value,
                "schrodinger": vp.schrodinger,
                "mcov": vp.mcov,
            },
            "base_measure": base.to_json(),
            "gibbs_residual": gibbs_residual(&report),
            "reference_identity_against_nu": nominal.residual,
            "checks": table,
        }),
    );
    let status = if all { "certified" } else { "failed" };
    let path = out.finish(&manifest, status, body)?;
    for c in &checks {
        let mark = if c.passed() { "ok  " } else { "FAIL" };
        println!("{mark} {:<20} {:.3e} (< {:.0e})", c.name, c.value, c.tolerance);
    }
    println!("report: {}", path.display());
    Ok(if all { 0 } else { 2 })
}
