use mbridge::gaussian::{
    bass_comparison_for_delta, gaussian_msb_from_specs, spectral_time_change, uniform_grid, weighted_energy_closed_form,
    weighted_energy_quadrature,
};
use mbridge::{Error, GaussianSpec, Result};
use serde_json::json;

use super::{config_of, object, parse_matrix, read_measure};
use crate::args::GaussianArgs;
use crate::output::{floats, OutputDir, RunManifest};

fn side(a: &GaussianArgs, source: bool, manifest: &mut RunManifest) -> Result<GaussianSpec> {
    let (flag, file, matrix) = if source {
        ("--sigma0", &a.mu, &a.sigma0)
    } else {
        ("--sigma1", &a.nu, &a.sigma1)
    };
    match (file, matrix) {
        (Some(path), _) => {
            let name = if source { "mu" } else { "nu" };
            let g = read_measure(&format!("--{name}"), path)?.into_gaussian()?;
            manifest.input(name, path, g.to_json());
            Ok(g)
        }
        (None, Some(text)) => GaussianSpec::centered(parse_matrix(flag, text)?),
        (None, None) => Err(Error::Field {
            field: flag.to_string(),
            message: "a covariance or a Gaussian document is required".into(),
        }),
    }
}

pub fn run(a: &GaussianArgs) -> Result<u8> {
    if a.grid == 0 {
        return Err(Error::Field {
            field: "--grid".into(),
            message: "must be positive".into(),
        });
    }
    let mut manifest = RunManifest::new("gaussian", config_of(a));
    let mu = side(a, true, &mut manifest)?;
    let nu = side(a, false, &mut manifest)?;
    let g = gaussian_msb_from_specs(&mu, &nu)?;
    let closed = weighted_energy_closed_form(&g.delta)?;
    let quad = weighted_energy_quadrature(&g.delta)?;
    let grid = uniform_grid(a.grid);
    let bass = bass_comparison_for_delta(&g.delta, &grid)?;

    let mut out = OutputDir::create(&a.out)?;
    let d = g.dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..d).map(|k| format!("sigma_{k}")))
        .chain((0..d).map(|k| format!("tau_{k}")))
        .chain((0..d).map(|k| format!("follmer_var_{k}")))
        .chain((0..d).map(|k| format!("bass_var_{k}")))
        .collect();
    let rows = grid.iter().enumerate().map(|(n, &t)| {
        let sigma = g
            .delta_eigenvalues
            .iter()
            .map(|&l| l / (1.0 - t + t * l));
        let tau = g.delta_eigenvalues.iter().map(|&l| spectral_time_change(l, t));
        floats(
            std::iter::once(t)
                .chain(sigma)
                .chain(tau)
                .chain(bass.follmer_schedule[n].iter().copied())
                .chain(bass.bass_schedule[n].iter().copied()),
        )
    });
    out.csv("schedule.csv", &header, rows)?;

    let mut body = object(g.to_json());
    body.insert(
        "weighted_energy".into(),
        json!({
            "closed_form": closed,
            "quadrature": quad.value,
            "quadrature_error_estimate": quad.error_estimate,
        }),
    );
    body.insert(
        "bass_comparison".into(),
        json!({
            "bass_volatility": super::rows(&bass.bass_volatility),
            "eigenvalues": bass.eigenvalues,
            "eigenvectors": super::rows(&bass.eigenvectors),
            "max_discrepancy": bass.max_discrepancy,
        }),
    );
    let path = out.finish(&manifest, "ok", body)?;
    println!("entropy value      {:.15}", g.entropy_value);
    println!("weighted energy    {closed:.15} (quadrature {:.15})", quad.value);
    println!("delta eigenvalues  {:?}", g.delta_eigenvalues);
    println!("schedule gap       {:.3e}", bass.max_discrepancy);
    println!("report: {}", path.display());
    Ok(0)
}
