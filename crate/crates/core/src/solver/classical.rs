//! Classical entropic transport with cost −x̄·y, solved by log-domain Sinkhorn
//! on the Schrödinger system
//!   Σ_j ν_j e^{φ̄_i + ψ_j + x̄_i·y_j} = 1,  Σ_i μ̄_i e^{φ̄_i + ψ_j + x̄_i·y_j} = 1.

use serde::Serialize;

use super::inner::log_sum_exp;
use crate::error::{Error, Result};
use crate::measures::{dot, relative_entropy, Coupling, DiscreteMeasure};

pub const SS_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITERATIONS: usize = 200_000;

#[derive(Debug, Clone, Serialize)]
pub struct SchrodingerSolution {
    /// H(π | μ̄⊗ν) − ∫ x̄·y dπ.
    pub value: f64,
    pub coupling: Coupling,
    pub phi_bar: Vec<f64>,
    pub psi: Vec<f64>,
    pub iterations: usize,
}

impl SchrodingerSolution {
    /// max_i |Σ_j ν_j e^{φ̄_i+ψ_j+x̄_i·y_j} − 1| and the same over columns.
    pub fn system_residuals(&self) -> (f64, f64) {
        let (mu_bar, nu) = (self.coupling.source(), self.coupling.target());
        let exponent = |i: usize, j: usize| self.phi_bar[i] + self.psi[j] + dot(mu_bar.atom(i), nu.atom(j));
        let ss1 = (0..mu_bar.len())
            .map(|i| {
                let s: f64 = (0..nu.len()).map(|j| nu.weights()[j] * exponent(i, j).exp()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max);
        let ss2 = (0..nu.len())
            .map(|j| {
                let s: f64 = (0..mu_bar.len()).map(|i| mu_bar.weights()[i] * exponent(i, j).exp()).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max);
        (ss1, ss2)
    }

    /// Conditional law of y given the base atom i.
    pub fn conditional(&self, i: usize) -> Vec<f64> {
        self.coupling.conditional(i)
    }
}

pub fn classical_sinkhorn_sp(mu_bar: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<SchrodingerSolution> {
    classical_sinkhorn_sp_with(mu_bar, nu, SS_TOLERANCE, DEFAULT_MAX_ITERATIONS)
}

pub fn classical_sinkhorn_sp_with(
    mu_bar: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tolerance: f64,
    max_iterations: usize,
) -> Result<SchrodingerSolution> {
    if mu_bar.dim() != nu.dim() {
        return Err(Error::Dimension {
            expected: mu_bar.dim(),
            found: nu.dim(),
        });
    }
    let (n, k) = (mu_bar.len(), nu.len());
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| dot(mu_bar.atom(i), nu.atom(j)))
        .collect();
    let log_mu: Vec<f64> = mu_bar.weights().iter().map(|w| w.ln()).collect();
    let log_nu: Vec<f64> = nu.weights().iter().map(|w| w.ln()).collect();
    let mut phi = vec![0.0; n];
    let mut psi = vec![0.0; k];
    let mut buf_row = vec![0.0; k];
    let mut buf_col = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        for i in 0..n {
            for j in 0..k {
                buf_row[j] = log_nu[j] + psi[j] + cost[i * k + j];
            }
            phi[i] = -log_sum_exp(&buf_row);
        }
        residual = 0.0;
        for j in 0..k {
            for i in 0..n {
                buf_col[i] = log_mu[i] + phi[i] + cost[i * k + j];
            }
            let lse = log_sum_exp(&buf_col) + psi[j];
            residual = f64::max(residual, lse.exp_m1().abs());
        }
        if residual < tolerance {
            break;
        }
        for j in 0..k {
            for i in 0..n {
                buf_col[i] = log_mu[i] + phi[i] + cost[i * k + j];
            }
            psi[j] = -log_sum_exp(&buf_col);
        }
    }
    if residual >= tolerance {
        return Err(Error::NotConverged {
            context: "classical Sinkhorn".into(),
            iterations,
            residual,
        });
    }
    let weights: Vec<f64> = (0..n * k)
        .map(|ij| {
            let (i, j) = (ij / k, ij % k);
            (log_mu[i] + log_nu[j] + phi[i] + psi[j] + cost[ij]).exp()
        })
        .collect();
    let coupling = Coupling::new(mu_bar.clone(), nu.clone(), weights)?;
    let h = relative_entropy(coupling.weights(), Coupling::product(mu_bar, nu).weights())?
        .finite("H(pi | mu_bar x nu)")?;
    let value = h - coupling.cross_moment();
    Ok(SchrodingerSolution {
        value,
        coupling,
        phi_bar: phi,
        psi,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn dirac_base() {
        let nu = DiscreteMeasure::one_dimensional(&[-1.0, 2.0], &[0.6, 0.4]).unwrap();
        let s = classical_sinkhorn_sp(&DiscreteMeasure::dirac(&[0.0]), &nu).unwrap();
        assert!(s.value.abs() < 1e-14);
        assert!((s.coupling.get(0, 0) - 0.6).abs() < 1e-14);
    }

    #[test]
    fn two_point_matches_golden_section() {
        let m = DiscreteMeasure::one_dimensional(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        let s = classical_sinkhorn_sp(&m, &m).unwrap();
        // Couplings [[a, ½−a], [½−a, a]] for a ∈ [0, ½].
        let objective = |a: f64| {
            let w = [a, 0.5 - a, 0.5 - a, a];
            let h: f64 = w.iter().map(|v| if *v > 0.0 { v * (v / 0.25).ln() } else { 0.0 }).sum();
            h - (a - (0.5 - a) - (0.5 - a) + a)
        };
        let a = golden_section(objective, 0.0, 0.5);
        assert!((s.value - objective(a)).abs() < 1e-8);
        assert!((s.coupling.get(0, 0) - a).abs() < 1e-7);
        let (ss1, ss2) = s.system_residuals();
        assert!(ss1 < 1e-12 && ss2 < 1e-12, "{ss1} {ss2}");
    }
}
