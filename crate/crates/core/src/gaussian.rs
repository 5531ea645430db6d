//! Closed-form martingale Schrödinger bridge between Gaussian marginals
//! N(b, Σ₀) ⪯c N(b, Σ₁), with Δ = Σ₁ − Σ₀ ≻ 0.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::GaussianSpec;
use crate::quadrature::{tanh_sinh, tanh_sinh_vec, Quadrature};

pub const MAX_DIMENSION: usize = 512;
/// Eigenvalues of Δ below this fraction of the largest one count as zero.
pub const DELTA_RELATIVE_FLOOR: f64 = 1e-12;
/// The weighted-energy quadrature stops this far from t = 1.
const ENDPOINT_GAP: f64 = 1e-8;

/// Closed-form solution bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMsb {
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    /// [[Σ₀, Σ₀], [Σ₀, Σ₁]].
    pub joint_covariance: DMatrix<f64>,
    /// ½ log(det Σ₁ / det Δ).
    pub entropy_value: f64,
    /// Δ⁻¹Σ₀Δ⁻¹, the covariance of the base measure h#μ.
    pub base_covariance: DMatrix<f64>,
    /// φ̄(x̄) = x̄ᵀ A x̄ + c with A = −½Δ.
    pub phi_bar_quadratic: DMatrix<f64>,
    pub phi_bar_constant: f64,
    /// ψ(y) = yᵀ B y with B = ½(Σ₁⁻¹ − Δ⁻¹).
    pub psi_quadratic: DMatrix<f64>,
    /// h(x) = Δ⁻¹ x.
    pub h_matrix: DMatrix<f64>,
    /// Spectrum of Δ (ascending) and its eigenvectors.
    pub delta_eigenvalues: Vec<f64>,
    pub delta_eigenvectors: DMatrix<f64>,
    /// Common mean removed on ingestion; potentials act on centred points.
    pub mean_shift: Vec<f64>,
}

pub fn gaussian_msb_closed_form(sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>) -> Result<GaussianMsb> {
    let d = sigma0.nrows();
    if d == 0 || d > MAX_DIMENSION {
        return Err(Error::Shape(format!("dimension {d} outside 1..={MAX_DIMENSION}")));
    }
    if sigma1.nrows() != d || !sigma0.is_square() || !sigma1.is_square() {
        return Err(Error::Dimension {
            expected: d,
            found: sigma1.nrows(),
        });
    }
    linalg::spd_eigenvalues(sigma0, 0.0, "sigma0")?;
    let ev1 = linalg::spd_eigenvalues(sigma1, 0.0, "sigma1")?;
    let delta = linalg::symmetrize(&(sigma1 - sigma0));
    let (values, vectors) = linalg::sym_eigen(&delta);
    let top = values.max().max(ev1.max());
    let low = values.min();
    if low < -DELTA_RELATIVE_FLOOR * top {
        return Err(Error::NotInConvexOrder(format!(
            "sigma1 - sigma0 has a negative eigenvalue {low:.6e}"
        )));
    }
    if low <= DELTA_RELATIVE_FLOOR * top {
        return Err(Error::InfiniteEntropy(format!(
            "sigma1 - sigma0 is singular (smallest eigenvalue {low:.3e}); every martingale coupling is supported on a hyperplane"
        )));
    }

    let delta_inv = &vectors * DMatrix::from_diagonal(&values.map(|l| 1.0 / l)) * vectors.transpose();
    let sigma1_inv = linalg::sym_apply(sigma1, |l| 1.0 / l);
    let log_det_delta: f64 = values.iter().map(|l| l.ln()).sum();
    let log_det_sigma1: f64 = ev1.iter().map(|l| l.ln()).sum();
    let entropy_value = 0.5 * (log_det_sigma1 - log_det_delta);

    let mut joint = DMatrix::zeros(2 * d, 2 * d);
    joint.view_mut((0, 0), (d, d)).copy_from(sigma0);
    joint.view_mut((0, d), (d, d)).copy_from(sigma0);
    joint.view_mut((d, 0), (d, d)).copy_from(sigma0);
    joint.view_mut((d, d), (d, d)).copy_from(sigma1);

    Ok(GaussianMsb {
        sigma0: sigma0.clone(),
        sigma1: sigma1.clone(),
        base_covariance: linalg::symmetrize(&(&delta_inv * sigma0 * &delta_inv)),
        phi_bar_quadratic: &delta * -0.5,
        phi_bar_constant: entropy_value,
        psi_quadratic: linalg::symmetrize(&((sigma1_inv - &delta_inv) * 0.5)),
        h_matrix: delta_inv,
        joint_covariance: joint,
        entropy_value,
        delta_eigenvalues: values.iter().copied().collect(),
        delta_eigenvectors: vectors,
        delta,
        mean_shift: vec![0.0; d],
    })
}

/// Closed form for two Gaussian specs; the means must coincide.
pub fn gaussian_msb_from_specs(mu: &GaussianSpec, nu: &GaussianSpec) -> Result<GaussianMsb> {
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let scale = 1.0 + mu.mean().iter().chain(nu.mean()).fold(0.0f64, |m, v| m.max(v.abs()));
    if mu.mean().iter().zip(nu.mean()).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
        return Err(Error::NotInConvexOrder("Gaussian means differ".into()));
    }
    let mut g = gaussian_msb_closed_form(mu.covariance(), nu.covariance())?;
    g.mean_shift = mu.mean().to_vec();
    Ok(g)
}

fn quad_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&(a * &v))
}

impl GaussianMsb {
    pub fn dim(&self) -> usize {
        self.delta.nrows()
    }

    pub fn phi_bar(&self, x_bar: &[f64]) -> f64 {
        quad_form(&self.phi_bar_quadratic, x_bar) + self.phi_bar_constant
    }

    pub fn psi(&self, y: &[f64]) -> f64 {
        quad_form(&self.psi_quadratic, y)
    }

    pub fn h(&self, x: &[f64]) -> Vec<f64> {
        (&self.h_matrix * DVector::from_column_slice(x)).iter().copied().collect()
    }

    /// Covariance of T#μ̄ for T(x̄) = Δx̄; equals Σ₀.
    pub fn base_pushforward_covariance(&self) -> DMatrix<f64> {
        &self.delta * &self.base_covariance * &self.delta
    }

    /// log dm/d(μ⊗ν) at (x, y), from the disintegration μ(dx) N(x, Δ)(dy).
    pub fn log_density(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let s1_inv = linalg::sym_apply(&self.sigma1, |l| 1.0 / l);
        self.entropy_value - 0.5 * quad_form(&self.h_matrix, &diff) + 0.5 * quad_form(&s1_inv, y)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "dimension": self.dim(),
            "mean_shift": self.mean_shift,
            "sigma0": rows(&self.sigma0),
            "sigma1": rows(&self.sigma1),
            "delta": rows(&self.delta),
            "delta_eigenvalues": self.delta_eigenvalues,
            "joint_covariance": rows(&self.joint_covariance),
            "entropy_value": self.entropy_value,
            "base_covariance": rows(&self.base_covariance),
            "phi_bar": { "quadratic": rows(&self.phi_bar_quadratic), "constant": self.phi_bar_constant },
            "psi": { "quadratic": rows(&self.psi_quadratic) },
            "h": rows(&self.h_matrix),
            "weighted_energy_closed_form": weighted_energy_closed_form(&self.delta).ok(),
        })
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// σ_t = Δ((1−t)I + tΔ)⁻¹.
pub fn follmer_volatility_gaussian(delta: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let d = delta.nrows();
    let a = DMatrix::<f64>::identity(d, d) * (1.0 - t) + delta * t;
    let inv = a
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| a.try_inverse().expect("(1-t)I + tΔ is invertible for SPD Δ"));
    delta * inv
}

/// H(N(x,Δ) | N(x,I)) = ½(tr Δ − d − log det Δ).
pub fn weighted_energy_closed_form(delta: &DMatrix<f64>) -> Result<f64> {
    let values = linalg::spd_eigenvalues(delta, DELTA_RELATIVE_FLOOR, "delta")?;
    Ok(0.5 * values.iter().map(|l| l - 1.0 - l.ln()).sum::<f64>())
}

/// ½∫₀¹ |σ_t − I|²_HS / (1−t) dt by tanh-sinh quadrature of the matrix path on
/// [0, 1 − 1e-8], plus the leading-order tail on the remaining sliver.
pub fn weighted_energy_quadrature(delta: &DMatrix<f64>) -> Result<Quadrature> {
    linalg::spd_eigenvalues(delta, DELTA_RELATIVE_FLOOR, "delta")?;
    let d = delta.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let integrand = |t: f64| {
        let s = follmer_volatility_gaussian(delta, t) - &eye;
        0.5 * linalg::hs_norm_sq(&s) / (1.0 - t)
    };
    let end = 1.0 - ENDPOINT_GAP;
    let body = tanh_sinh(integrand, 0.0, end, 1e-12)?;
    // Near t = 1 the integrand is (1−t)·|(Δ − I)Δ⁻¹|²/2 to leading order.
    let delta_inv = linalg::sym_apply(delta, |l| 1.0 / l);
    let slope = 0.5 * linalg::hs_norm_sq(&((delta - &eye) * delta_inv));
    let tail = slope * ENDPOINT_GAP * ENDPOINT_GAP / 2.0;
    Ok(Quadrature {
        value: body.value + tail,
        error_estimate: body.error_estimate + tail,
    })
}

/// ∫₀ᵗ σ_s σ_sᵀ ds by quadrature; at t = 1 it equals Δ.
pub fn variance_budget(delta: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let d = delta.nrows();
    if t <= 0.0 {
        return Ok(DMatrix::zeros(d, d));
    }
    let (v, _) = tanh_sinh_vec(
        |s| {
            let sig = follmer_volatility_gaussian(delta, s);
            (&sig * sig.transpose()).iter().copied().collect()
        },
        0.0,
        t,
        1e-13,
    )?;
    Ok(DMatrix::from_column_slice(d, d, &v))
}

/// τ(t) = tλ/(1 − t + tλ).
pub fn spectral_time_change(lambda: f64, t: f64) -> f64 {
    t * lambda / (1.0 - t + t * lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BassComparison {
    /// Δ^{1/2}, the constant volatility of the Bass martingale.
    pub bass_volatility: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub grid: Vec<f64>,
    /// τ_k(t) on the grid, one row per time.
    pub time_change: Vec<Vec<f64>>,
    /// Diagonal of Uᵀ Cov(M^E_t − M^E_0) U, one row per time.
    pub follmer_schedule: Vec<Vec<f64>>,
    /// τ_k(t) λ_k, the Bass covariance at the changed times.
    pub bass_schedule: Vec<Vec<f64>>,
    /// Largest |E − B| over the grid, including off-diagonal entries of the
    /// rotated Föllmer covariance.
    pub max_discrepancy: f64,
}

pub fn bass_comparison_gaussian(sigma0: &DMatrix<f64>, sigma1: &DMatrix<f64>, grid: &[f64]) -> Result<BassComparison> {
    let g = gaussian_msb_closed_form(sigma0, sigma1)?;
    bass_comparison_for_delta(&g.delta, grid)
}

pub fn bass_comparison_for_delta(delta: &DMatrix<f64>, grid: &[f64]) -> Result<BassComparison> {
    linalg::spd_eigenvalues(delta, DELTA_RELATIVE_FLOOR, "delta")?;
    let d = delta.nrows();
    let (values, u) = linalg::sym_eigen(delta);
    let eye = DMatrix::<f64>::identity(d, d);
    let mut time_change = Vec::with_capacity(grid.len());
    let mut follmer = Vec::with_capacity(grid.len());
    let mut bass = Vec::with_capacity(grid.len());
    let mut worst = 0.0f64;
    for &t in grid {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("time {t} outside [0, 1]")));
        }
        // Itô isometry: Cov(M_t − M_0) = tΔ²((1−t)I + tΔ)⁻¹.
        let a = &eye * (1.0 - t) + delta * t;
        let inv = a.try_inverse().ok_or_else(|| Error::Numerical("singular time-change matrix".into()))?;
        let cov = delta * delta * inv * t;
        let rotated = u.transpose() * cov * &u;
        let taus: Vec<f64> = values.iter().map(|&l| spectral_time_change(l, t)).collect();
        let b: Vec<f64> = taus.iter().zip(values.iter()).map(|(tau, l)| tau * l).collect();
        let e: Vec<f64> = (0..d).map(|k| rotated[(k, k)]).collect();
        for r in 0..d {
            for c in 0..d {
                let target = if r == c { b[r] } else { 0.0 };
                worst = worst.max((rotated[(r, c)] - target).abs());
            }
        }
        time_change.push(taus);
        follmer.push(e);
        bass.push(b);
    }
    Ok(BassComparison {
        bass_volatility: linalg::sym_apply(delta, f64::sqrt),
        eigenvalues: values.iter().copied().collect(),
        eigenvectors: u,
        grid: grid.to_vec(),
        time_change,
        follmer_schedule: follmer,
        bass_schedule: bass,
        max_discrepancy: worst,
    })
}

/// Uniform grid of n + 1 points on [0, 1].
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..=n).map(|i| i as f64 / n as f64).collect()
}
