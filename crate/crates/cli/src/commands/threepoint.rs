use std::fmt::Write as _;

use mbridge::threepoint::{
    bass_minimize, bass_system_residual, entropy_minimize, entropy_system_residual, Matrix3x3, ThreePointInstance,
    ThreePointOptimum, MU_ATOMS, NU_ATOMS,
};
use mbridge::{sinkhorn_msb, Result, SolverConfig};
use serde_json::{json, Map};

use super::config_of;
use crate::args::ThreePointArgs;
use crate::output::{OutputDir, RunManifest};

fn matrix_text(out: &mut String, title: &str, m: &Matrix3x3) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:>8} {:>14} {:>14} {:>14}", "x \\ y", NU_ATOMS[0], NU_ATOMS[1], NU_ATOMS[2]);
    for (x, row) in MU_ATOMS.iter().zip(m) {
        let _ = writeln!(out, "{x:>8} {:>14.10} {:>14.10} {:>14.10}", row[0], row[1], row[2]);
    }
}

fn optimum_text(out: &mut String, name: &str, o: &ThreePointOptimum) {
    let _ = writeln!(
        out,
        "{name:<8} u = {:.10}  v = {:.10}  w = {:.10}  value = {:.12}",
        o.u, o.v, o.w, o.value
    );
}

pub fn run(a: &ThreePointArgs) -> Result<u8> {
    let inst = ThreePointInstance::new(a.p1, a.q1, a.p2, a.q2)?;
    let mut manifest = RunManifest::new("threepoint", config_of(a));
    let entropy = entropy_minimize(&inst)?;
    let bass = bass_minimize(&inst)?;
    let solver = sinkhorn_msb(&inst.mu(), &inst.nu(), &SolverConfig::default())?;
    manifest.iterations = Some(entropy.iterations);
    let mut solver_gap = 0.0f64;
    for (i, row) in entropy.matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            solver_gap = solver_gap.max((v - solver.coupling.get(i, j)).abs());
        }
    }
    let gap = [entropy.u - bass.optimum.u, entropy.v - bass.optimum.v];
    let cross = json!({
        "bass_system_at_entropy": bass_system_residual(&inst, entropy.u, entropy.v),
        "entropy_system_at_bass": entropy_system_residual(&inst, bass.optimum.u, bass.optimum.v),
    });

    let mut body = Map::new();
    body.insert("instance".into(), json!(inst));
    body.insert("entropy".into(), json!(entropy));
    body.insert("bass".into(), json!(bass));
    body.insert("gap".into(), json!(gap));
    body.insert("cross_residuals".into(), cross);
    body.insert("solver_agreement".into(), json!(solver_gap));

    let mut text = String::new();
    let _ = writeln!(
        text,
        "mu = {:.4} d(-1) + {:.4} d(0) + {:.4} d(1)    nu = {:.4} d(-2) + {:.4} d(0) + {:.4} d(2)",
        inst.p1, inst.q1, inst.r1, inst.p2, inst.q2, inst.r2
    );
    let _ = writeln!(text);
    matrix_text(&mut text, "entropy optimizer m^E", &entropy.matrix);
    let _ = writeln!(text);
    matrix_text(&mut text, "Bass optimizer m^B", &bass.optimum.matrix);
    let _ = writeln!(text);
    optimum_text(&mut text, "entropy", &entropy);
    optimum_text(&mut text, "bass", &bass.optimum);
    let _ = writeln!(text, "gap      u^E - u^B = {:+.6e}  v^E - v^B = {:+.6e}", gap[0], gap[1]);
    let _ = writeln!(text, "routes   Bass minimizer vs first-order root: {:.3e}", bass.route_gap);
    let _ = writeln!(text, "solver   max |m^E - Sinkhorn| = {solver_gap:.3e}");

    let mut out = OutputDir::create(&a.out)?;
    out.text("threepoint.txt", &text)?;
    let path = out.finish(&manifest, "ok", body)?;
    print!("{text}");
    println!("report: {}", path.display());
    Ok(0)
}
