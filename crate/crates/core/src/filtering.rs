//! Filtering view of the Föllmer martingale: the hidden signal Y − x is
//! observed through R_s = s(Y − x) + W_s, and Z_s = E[Y | R_u, u ≤ s].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::dynamics::{simulate_follmer_martingale, FiberModel, SimulationOptions, TerminalLaw};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::rng::substream;
use crate::solver::{inner_dual_solve, log_sum_exp, SolverConfig};
use crate::stats::{frequencies, ks_two_sample};

/// τ_σ(s) = σ²s/(1 + σ²s); s = ∞ maps to 1.
pub fn info_time_change(sigma: f64, s: f64) -> f64 {
    if s.is_infinite() {
        return 1.0;
    }
    let a = sigma * sigma * s;
    a / (1.0 + a)
}

/// s = t/(σ²(1 − t)); t = 1 maps to ∞.
pub fn info_time_inverse(sigma: f64, t: f64) -> f64 {
    if t >= 1.0 {
        return f64::INFINITY;
    }
    t / (sigma * sigma * (1.0 - t))
}

fn fiber_law(fiber: &FiberModel) -> Result<&DiscreteMeasure> {
    match fiber.law() {
        TerminalLaw::Discrete(m) => Ok(m),
        TerminalLaw::Gaussian { .. } => Err(Error::Config("filtering requires a discrete fiber".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    pub weights: Vec<f64>,
    /// Z_s = x + Σ_j w_j (y_j − x).
    pub estimate: Vec<f64>,
}

/// w_j ∝ m_j exp((y_j − x)·R_s − s|y_j − x|²/2).
pub fn posterior_estimator(fiber: &FiberModel, s: f64, r: &[f64]) -> Result<Posterior> {
    let law = fiber_law(fiber)?;
    if !(s >= 0.0) {
        return Err(Error::Config(format!("observation time {s} is negative")));
    }
    let x = fiber.start();
    if r.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: r.len(),
        });
    }
    let logits: Vec<f64> = law
        .iter()
        .map(|(y, w)| {
            let (mut br, mut bb) = (0.0, 0.0);
            for c in 0..x.len() {
                let b = y[c] - x[c];
                br += b * r[c];
                bb += b * b;
            }
            w.ln() + br - 0.5 * s * bb
        })
        .collect();
    let lse = log_sum_exp(&logits);
    let weights: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
    let mut estimate = x.to_vec();
    for (j, w) in weights.iter().enumerate() {
        for (c, e) in estimate.iter_mut().enumerate() {
            *e += w * (law.atom(j)[c] - x[c]);
        }
    }
    Ok(Posterior { weights, estimate })
}

/// Posterior weights rebuilt from (s, Z_s) alone: the tilted family
/// m_j exp(ψ_s(y_j) + h·y_j) with ψ_s(y) = −s|y − x|²/2, with h fixed by
/// moment matching to Z_s.
pub fn restart_weights(fiber: &FiberModel, s: f64, z: &[f64]) -> Result<Vec<f64>> {
    let law = fiber_law(fiber)?;
    let x = fiber.start();
    let psi: Vec<f64> = law
        .atoms()
        .map(|y| -0.5 * s * y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .collect();
    Ok(inner_dual_solve(z, &psi, law, &SolverConfig::default())?.conditional())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationPath {
    pub id: u64,
    /// Hidden signal Y − x.
    pub signal: Vec<f64>,
    /// R and Z on the grid, row-major (time, coordinate).
    pub observation: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationEnsemble {
    pub dim: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub paths: Vec<ObservationPath>,
}

impl ObservationEnsemble {
    pub fn estimate_column(&self, k: usize, c: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.estimate[k * self.dim + c]).collect()
    }

    pub fn slot(&self, s: f64) -> Option<usize> {
        self.grid.iter().position(|g| (g - s).abs() <= 1e-12 * (1.0 + s))
    }
}

/// Uniform observation grid of n + 1 points on [0, horizon].
pub fn observation_grid(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

/// Draws Y ~ m_x and samples R exactly on the grid (Gaussian increments).
pub fn simulate_observations(fiber: &FiberModel, grid: &[f64], n_paths: usize, seed: u64) -> Result<ObservationEnsemble> {
    let law = fiber_law(fiber)?;
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("observation grid must start at 0 and increase strictly".into()));
    }
    let d = fiber.dim();
    let x = fiber.start();
    let job = |p: usize| -> Result<ObservationPath> {
        let mut rng = substream(seed, p as u64);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = law.len() - 1;
        for (j, w) in law.weights().iter().enumerate() {
            acc += w;
            if u < acc {
                pick = j;
                break;
            }
        }
        let signal: Vec<f64> = law.atom(pick).iter().zip(x).map(|(y, a)| y - a).collect();
        let mut r = vec![0.0; d];
        let mut observation = Vec::with_capacity(grid.len() * d);
        let mut estimate = Vec::with_capacity(grid.len() * d);
        for k in 0..grid.len() {
            if k > 0 {
                let ds = grid[k] - grid[k - 1];
                for c in 0..d {
                    let z: f64 = rng.sample(StandardNormal);
                    r[c] += signal[c] * ds + ds.sqrt() * z;
                }
            }
            observation.extend_from_slice(&r);
            estimate.extend(posterior_estimator(fiber, grid[k], &r)?.estimate);
        }
        Ok(ObservationPath {
            id: p as u64,
            signal,
            observation,
            estimate,
        })
    };
    #[cfg(feature = "parallel")]
    let paths: Result<Vec<_>> = (0..n_paths).into_par_iter().map(job).collect();
    #[cfg(not(feature = "parallel"))]
    let paths: Result<Vec<_>> = (0..n_paths).map(job).collect();
    Ok(ObservationEnsemble {
        dim: d,
        grid: grid.to_vec(),
        seed,
        paths: paths?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaInvarianceReport {
    pub sigmas: Vec<f64>,
    pub checkpoints: Vec<f64>,
    /// Martingale times τ_σ(s), indexed [sigma][checkpoint].
    pub times: Vec<Vec<f64>>,
    /// Pairwise KS distances indexed [checkpoint][sigma][sigma], maximised
    /// over coordinates.
    pub ks: Vec<Vec<Vec<f64>>>,
}

impl SigmaInvarianceReport {
    pub fn max_ks(&self) -> f64 {
        self.ks.iter().flatten().flatten().copied().fold(0.0, f64::max)
    }
}

/// For each σ, simulates the bridge at reference volatility σ and samples
/// M^σ at τ_σ(s). Each σ uses its own stream family, so samples are
/// independent across σ.
pub fn sigma_invariance_test(
    fiber: &FiberModel,
    sigmas: &[f64],
    s_checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<SigmaInvarianceReport> {
    if sigmas.is_empty() {
        return Err(Error::Config("at least one sigma is required".into()));
    }
    if s_checkpoints.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::Config("checkpoints must be non-negative".into()));
    }
    let d = fiber.dim();
    let mut samples = Vec::with_capacity(sigmas.len());
    let mut times = Vec::with_capacity(sigmas.len());
    for (i, &sigma) in sigmas.iter().enumerate() {
        let f = fiber.clone().with_sigma(sigma)?;
        let taus: Vec<f64> = s_checkpoints.iter().map(|&s| info_time_change(sigma, s)).collect();
        let mut grid = vec![0.0, 1.0];
        grid.extend(taus.iter().copied());
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let opts = SimulationOptions::default().recording(taus.clone());
        let stream_seed = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let e = simulate_follmer_martingale(&f, &grid, n_paths, stream_seed, &opts)?;
        let cols: Vec<Vec<Vec<f64>>> = (0..taus.len())
            .map(|slot| (0..d).map(|c| e.martingale_column(slot, c)).collect())
            .collect();
        samples.push(cols);
        times.push(taus);
    }
    let ks = (0..s_checkpoints.len())
        .map(|k| {
            (0..sigmas.len())
                .map(|a| {
                    (0..sigmas.len())
                        .map(|b| {
                            (0..d)
                                .map(|c| ks_two_sample(&samples[a][k][c], &samples[b][k][c]))
                                .fold(0.0, f64::max)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(SigmaInvarianceReport {
        sigmas: sigmas.to_vec(),
        checkpoints: s_checkpoints.to_vec(),
        times,
        ks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WonhamReport {
    pub checkpoints: Vec<f64>,
    pub ks: Vec<f64>,
    /// Euler steps that left (0, 1) before clamping.
    pub violations: usize,
    /// Frequencies of {Z → 0, Z → 1} from the exact construction.
    pub terminal_frequencies: Vec<f64>,
    pub terminal_horizon: f64,
    pub step: f64,
    pub n_paths: usize,
}

pub fn logistic(r: f64) -> f64 {
    if r >= 0.0 {
        1.0 / (1.0 + (-r).exp())
    } else {
        let e = r.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli signal: x = ½, ν = ½δ₀ + ½δ₁. Euler–Maruyama on
/// dZ = Z(1 − Z)dB against Z_s = logistic(R_s) with R sampled exactly.
pub fn wonham_sde_crosscheck(n_paths: usize, step: f64, checkpoints: &[f64], seed: u64) -> Result<WonhamReport> {
    if !(step > 0.0) {
        return Err(Error::Config("step must be positive".into()));
    }
    let mut order = checkpoints.to_vec();
    if order.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Config("checkpoints must be finite and non-negative".into()));
    }
    order.sort_by(f64::total_cmp);
    let terminal_horizon = 1e3;
    let n_ck = order.len();

    let job = |p: usize| -> (Vec<f64>, Vec<f64>, usize, usize) {
        // Euler paths and exact paths use disjoint stream families.
        let mut rng = substream(seed, p as u64);
        let mut z = 0.5;
        let mut s = 0.0;
        let mut euler = Vec::with_capacity(n_ck);
        let mut violations = 0;
        for &target in &order {
            let steps = ((target - s) / step).round() as usize;
            for _ in 0..steps {
                let xi: f64 = rng.sample(StandardNormal);
                let next = z + z * (1.0 - z) * step.sqrt() * xi;
                if !(next > 0.0 && next < 1.0) {
                    violations += 1;
                }
                z = next.clamp(f64::EPSILON, 1.0 - f64::EPSILON);
            }
            s = target;
            euler.push(z);
        }

        let mut rng = substream(seed, (1u64 << 63) | p as u64);
        let y: f64 = if rng.random::<f64>() < 0.5 { 0.0 } else { 1.0 };
        let signal = y - 0.5;
        let (mut r, mut s) = (0.0, 0.0);
        let mut exact = Vec::with_capacity(n_ck);
        for &target in &order {
            let ds = target - s;
            let xi: f64 = rng.sample(StandardNormal);
            r += signal * ds + ds.sqrt() * xi;
            s = target;
            exact.push(logistic(r));
        }
        let ds = terminal_horizon - s.min(terminal_horizon);
        let xi: f64 = rng.sample(StandardNormal);
        let far = logistic(r + signal * ds + ds.sqrt() * xi);
        (euler, exact, violations, usize::from(far > 0.5))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = (0..n_paths).into_par_iter().map(job).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = (0..n_paths).map(job).collect();

    let ks = (0..n_ck)
        .map(|k| {
            let a: Vec<f64> = results.iter().map(|r| r.0[k]).collect();
            let b: Vec<f64> = results.iter().map(|r| r.1[k]).collect();
            ks_two_sample(&a, &b)
        })
        .collect();
    let labels: Vec<usize> = results.iter().map(|r| r.3).collect();
    Ok(WonhamReport {
        checkpoints: order,
        ks,
        violations: results.iter().map(|r| r.2).sum(),
        terminal_frequencies: frequencies(&labels, 2),
        terminal_horizon,
        step,
        n_paths,
    })
}

/// KS distance per coordinate between Z_s from the observation model and
/// M_{s/(1+s)} from the exact martingale simulation (σ = 1).
pub fn dynamics_consistency(fiber: &FiberModel, s: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    let fiber = fiber.clone().with_sigma(1.0)?;
    let obs = simulate_observations(&fiber, &[0.0, s], n_paths, seed)?;
    let t = info_time_change(1.0, s);
    let mut grid = vec![0.0, t, 1.0];
    grid.dedup();
    let e = simulate_follmer_martingale(
        &fiber,
        &grid,
        n_paths,
        seed ^ 0xD1B5_4A32_D192_ED03,
        &SimulationOptions::default().recording(vec![t]),
    )?;
    Ok((0..fiber.dim())
        .map(|c| ks_two_sample(&obs.estimate_column(1, c), &e.martingale_column(0, c)))
        .collect())
}
