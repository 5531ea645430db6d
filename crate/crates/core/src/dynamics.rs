//! Fiberwise simulation of the Föllmer martingale.
//!
//! Conditionally on the terminal draw Y = y the drifted process is a Brownian
//! bridge of volatility σ from x to y, so X_t = x + t(y − x) + σβ_t with β a
//! standard bridge pinned at 0 at both ends. The martingale is recovered as
//! M_t = E[Y | X_t] = X_t + (1 − t)u_t(X_t).

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::DELTA_RELATIVE_FLOOR;
use crate::linalg;
use crate::measures::DiscreteMeasure;
use crate::rng::{substream, PathRng};
use crate::solver::log_sum_exp;
use crate::stats::mean_and_standard_error;

pub const BARYCENTER_TOLERANCE: f64 = 1e-10;
/// Terminal points closer than this to an atom resolve the t = 1 posterior.
pub const TERMINAL_ATOM_TOLERANCE: f64 = 1e-9;
/// Energy integrands are not evaluated beyond this time.
pub const DEFAULT_ENERGY_CLIP: f64 = 1.0 - 1e-6;
pub const MIXTURE_TOLERANCE: f64 = 1e-9;
const GRID_MATCH_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TerminalLaw {
    Discrete(DiscreteMeasure),
    /// N(x, Δ), stored with the spectral decomposition of Δ.
    Gaussian {
        delta: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
    },
}

/// A start point x together with the conditional law m_x of Y given X = x.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberModel {
    start: Vec<f64>,
    law: TerminalLaw,
    sigma_ref: f64,
    /// Discrete laws: atoms minus x, and log weights.
    offsets: Vec<f64>,
    log_weights: Vec<f64>,
}

impl FiberModel {
    pub fn discrete(start: Vec<f64>, law: DiscreteMeasure) -> Result<Self> {
        if law.dim() != start.len() {
            return Err(Error::Dimension {
                expected: start.len(),
                found: law.dim(),
            });
        }
        let bary = law.mean();
        let scale = 1.0 + start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gap = bary.iter().zip(&start).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if gap > BARYCENTER_TOLERANCE * scale {
            return Err(Error::InvalidMeasure(format!(
                "fiber barycenter differs from its start point by {gap:.3e}"
            )));
        }
        let d = start.len();
        let offsets = (0..law.len())
            .flat_map(|j| (0..d).map(move |c| (j, c)))
            .map(|(j, c)| law.atom(j)[c] - start[c])
            .collect();
        let log_weights = law.weights().iter().map(|w| w.ln()).collect();
        Ok(FiberModel {
            start,
            law: TerminalLaw::Discrete(law),
            sigma_ref: 1.0,
            offsets,
            log_weights,
        })
    }

    /// Terminal law N(x, Δ) with Δ symmetric positive definite.
    pub fn gaussian(start: Vec<f64>, delta: DMatrix<f64>) -> Result<Self> {
        if delta.nrows() != start.len() || !delta.is_square() {
            return Err(Error::Dimension {
                expected: start.len(),
                found: delta.nrows(),
            });
        }
        if !linalg::is_symmetric(&delta, 1e-12 * (1.0 + delta.amax())) {
            return Err(Error::InvalidMeasure("delta is not symmetric".into()));
        }
        linalg::spd_eigenvalues(&delta, DELTA_RELATIVE_FLOOR, "delta")?;
        let (values, vectors) = linalg::sym_eigen(&delta);
        Ok(FiberModel {
            start,
            law: TerminalLaw::Gaussian {
                delta,
                eigenvalues: values.iter().copied().collect(),
                eigenvectors: vectors,
            },
            sigma_ref: 1.0,
            offsets: Vec::new(),
            log_weights: Vec::new(),
        })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Config(format!("reference volatility must be positive, got {sigma}")));
        }
        self.sigma_ref = sigma;
        Ok(self)
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn law(&self) -> &TerminalLaw {
        &self.law
    }

    pub fn sigma_ref(&self) -> f64 {
        self.sigma_ref
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }

    /// A fiber whose terminal law is δ_x.
    pub fn is_dirac(&self) -> bool {
        matches!(&self.law, TerminalLaw::Discrete(m) if m.len() == 1)
    }

    fn discrete_law(&self) -> Result<&DiscreteMeasure> {
        match &self.law {
            TerminalLaw::Discrete(m) => Ok(m),
            TerminalLaw::Gaussian { .. } => Err(Error::Config("operation requires a discrete fiber".into())),
        }
    }

    fn rotation(&self) -> Option<&DMatrix<f64>> {
        match &self.law {
            TerminalLaw::Gaussian { eigenvectors, .. } => Some(eigenvectors),
            TerminalLaw::Discrete(_) => None,
        }
    }

    /// Posterior moments in the working basis (eigenbasis of Δ for Gaussian
    /// fibers, standard basis otherwise). `r` is the rotated offset X_t − x.
    /// Writes E[Y − x | X_t] into `mean` and returns the two energy densities
    /// |u/σ|² and |σ^M/σ − I|²_HS.
    fn evaluate(&self, t: f64, r: &[f64], mean: &mut [f64], scratch: &mut Vec<f64>) -> (f64, f64) {
        let s2 = self.sigma_ref * self.sigma_ref;
        let rest = 1.0 - t;
        let d = r.len();
        let mart = match &self.law {
            TerminalLaw::Gaussian { eigenvalues, .. } => {
                let mut mart = 0.0;
                for k in 0..d {
                    let denom = t * eigenvalues[k] + s2 * rest;
                    mean[k] = eigenvalues[k] * r[k] / denom;
                    mart += (eigenvalues[k] / denom - 1.0).powi(2);
                }
                mart
            }
            TerminalLaw::Discrete(_) => {
                let k = self.log_weights.len();
                scratch.resize(k, 0.0);
                let scale = 1.0 / (s2 * rest);
                for j in 0..k {
                    let b = &self.offsets[j * d..(j + 1) * d];
                    let (mut ab, mut bb) = (0.0, 0.0);
                    for c in 0..d {
                        ab += b[c] * r[c];
                        bb += b[c] * b[c];
                    }
                    scratch[j] = self.log_weights[j] + (ab - 0.5 * t * bb) * scale;
                }
                let lse = log_sum_exp(scratch);
                mean.iter_mut().for_each(|m| *m = 0.0);
                for j in 0..k {
                    scratch[j] = (scratch[j] - lse).exp();
                    let b = &self.offsets[j * d..(j + 1) * d];
                    for c in 0..d {
                        mean[c] += scratch[j] * b[c];
                    }
                }
                // σ^M/σ = Cov_q(Y)/(σ²(1 − t)).
                let mut mart = 0.0;
                for a in 0..d {
                    for c in 0..d {
                        let mut second = 0.0;
                        for j in 0..k {
                            second += scratch[j] * self.offsets[j * d + a] * self.offsets[j * d + c];
                        }
                        let v = (second - mean[a] * mean[c]) * scale - if a == c { 1.0 } else { 0.0 };
                        mart += v * v;
                    }
                }
                mart
            }
        };
        let drift: f64 = mean.iter().zip(r).map(|(m, z)| (m - z).powi(2)).sum::<f64>() / (rest * rest * s2);
        (drift, mart)
    }

    fn draw_terminal(&self, rng: &mut PathRng, out: &mut [f64]) -> usize {
        match &self.law {
            TerminalLaw::Gaussian { eigenvalues, .. } => {
                for (o, l) in out.iter_mut().zip(eigenvalues) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = l.sqrt() * z;
                }
                0
            }
            TerminalLaw::Discrete(m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = m.len() - 1;
                for (j, w) in m.weights().iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                let d = out.len();
                out.copy_from_slice(&self.offsets[pick * d..(pick + 1) * d]);
                pick
            }
        }
    }

    /// Maps a working-basis offset back to a point.
    fn to_point(&self, r: &[f64], out: &mut [f64]) {
        match self.rotation() {
            Some(u) => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = self.start[a] + (0..r.len()).map(|k| u[(a, k)] * r[k]).sum::<f64>();
                }
            }
            None => {
                for (o, (x, v)) in out.iter_mut().zip(self.start.iter().zip(r)) {
                    *o = x + v;
                }
            }
        }
    }

    fn to_working(&self, z: &[f64]) -> Vec<f64> {
        let diff: Vec<f64> = z.iter().zip(&self.start).map(|(a, b)| a - b).collect();
        match self.rotation() {
            Some(u) => (0..diff.len())
                .map(|k| (0..diff.len()).map(|a| u[(a, k)] * diff[a]).sum())
                .collect(),
            None => diff,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Law of Y given X_t = z over the atoms of a discrete fiber:
/// q_j ∝ m_j exp(((y_j − x)·(z − x) − t|y_j − x|²/2) / (σ²(1 − t))).
pub fn backward_posterior(fiber: &FiberModel, t: f64, z: &[f64]) -> Result<Vec<f64>> {
    let law = fiber.discrete_law()?;
    check_time(t)?;
    if z.len() != fiber.dim() {
        return Err(Error::Dimension {
            expected: fiber.dim(),
            found: z.len(),
        });
    }
    if t == 1.0 {
        let (best, dist) = law
            .atoms()
            .enumerate()
            .map(|(j, a)| (j, crate::measures::distance(a, z)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty measure");
        if dist > TERMINAL_ATOM_TOLERANCE {
            return Err(Error::TerminalAmbiguity);
        }
        let mut q = vec![0.0; law.len()];
        q[best] = 1.0;
        return Ok(q);
    }
    let r = fiber.to_working(z);
    let mut mean = vec![0.0; fiber.dim()];
    let mut q = Vec::new();
    fiber.evaluate(t, &r, &mut mean, &mut q);
    Ok(q)
}

/// Föllmer drift and martingale volatility at (t, z).
#[derive(Debug, Clone, PartialEq)]
pub struct FiberCoefficients {
    /// u = (E_q[Y] − z)/(1 − t).
    pub drift: Vec<f64>,
    /// Cov_q(Y)/(σ(1 − t)).
    pub volatility: DMatrix<f64>,
    /// M = z + (1 − t)u = E_q[Y].
    pub martingale: Vec<f64>,
}

pub fn fiber_coefficients(fiber: &FiberModel, t: f64, z: &[f64]) -> Result<FiberCoefficients> {
    check_time(t)?;
    if t >= 1.0 {
        return Err(Error::Config("coefficients are not defined at t = 1".into()));
    }
    if z.len() != fiber.dim() {
        return Err(Error::Dimension {
            expected: fiber.dim(),
            found: z.len(),
        });
    }
    let d = fiber.dim();
    let s = fiber.sigma_ref;
    let rest = 1.0 - t;
    let r = fiber.to_working(z);
    let mut mean_w = vec![0.0; d];
    let mut q = Vec::new();
    fiber.evaluate(t, &r, &mut mean_w, &mut q);
    let mut martingale = vec![0.0; d];
    fiber.to_point(&mean_w, &mut martingale);
    let drift = martingale.iter().zip(z).map(|(m, x)| (m - x) / rest).collect();
    let volatility = match &fiber.law {
        TerminalLaw::Gaussian {
            eigenvalues,
            eigenvectors,
            ..
        } => {
            let diag: Vec<f64> = eigenvalues.iter().map(|l| l * s / (t * l + s * s * rest)).collect();
            eigenvectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)) * eigenvectors.transpose()
        }
        TerminalLaw::Discrete(_) => {
            let mut cov = DMatrix::zeros(d, d);
            for (j, qj) in q.iter().enumerate() {
                let b = &fiber.offsets[j * d..(j + 1) * d];
                for a in 0..d {
                    for c in 0..d {
                        cov[(a, c)] += qj * (b[a] - mean_w[a]) * (b[c] - mean_w[c]);
                    }
                }
            }
            cov / (s * rest)
        }
    };
    Ok(FiberCoefficients {
        drift,
        volatility,
        martingale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum EnergyRule {
    /// Σ f(t_k, X_{t_k}) Δt over cells with t_k below the clip time.
    #[default]
    LeftEndpoint,
    /// One uniformly drawn time per cell, with the state at that time drawn
    /// from the bridge between the neighbouring grid values. Unbiased for the
    /// integral up to the clip time.
    StratifiedRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    pub energy_rule: EnergyRule,
    /// Times at which M and X are stored; every one must be a grid point.
    /// `None` stores the whole grid.
    pub record_times: Option<Vec<f64>>,
    pub energy_clip: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            energy_rule: EnergyRule::LeftEndpoint,
            record_times: None,
            energy_clip: DEFAULT_ENERGY_CLIP,
        }
    }
}

impl SimulationOptions {
    pub fn recording(mut self, times: Vec<f64>) -> Self {
        self.record_times = Some(times);
        self
    }

    pub fn with_rule(mut self, rule: EnergyRule) -> Self {
        self.energy_rule = rule;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub id: u64,
    pub fiber: usize,
    pub terminal: Vec<f64>,
    /// M at the recorded times, row-major (time, coordinate).
    pub martingale: Vec<f64>,
    pub drifted: Vec<f64>,
    pub drift_energy: f64,
    pub mart_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub dim: usize,
    pub grid: Vec<f64>,
    pub record_indices: Vec<usize>,
    pub seed: u64,
    pub energy_rule: EnergyRule,
    pub fibers: Vec<FiberModel>,
    pub fiber_weights: Vec<f64>,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn record_times(&self) -> Vec<f64> {
        self.record_indices.iter().map(|&k| self.grid[k]).collect()
    }

    /// Position of `t` among the recorded times.
    pub fn record_slot(&self, t: f64) -> Option<usize> {
        self.record_indices
            .iter()
            .position(|&k| (self.grid[k] - t).abs() <= GRID_MATCH_TOLERANCE)
    }

    /// Coordinate `c` of M at recorded slot `slot`, one value per path.
    pub fn martingale_column(&self, slot: usize, c: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.martingale[slot * self.dim + c]).collect()
    }

    pub fn drifted_column(&self, slot: usize, c: usize) -> Vec<f64> {
        self.paths.iter().map(|p| p.drifted[slot * self.dim + c]).collect()
    }

    pub fn martingale_point(&self, path: usize, slot: usize) -> &[f64] {
        &self.paths[path].martingale[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn drifted_point(&self, path: usize, slot: usize) -> &[f64] {
        &self.paths[path].drifted[slot * self.dim..(slot + 1) * self.dim]
    }

    /// Sample mean and standard error of the drift energy.
    pub fn drift_energy(&self) -> (f64, f64) {
        mean_and_standard_error(&self.paths.iter().map(|p| p.drift_energy).collect::<Vec<_>>())
    }

    pub fn mart_energy(&self) -> (f64, f64) {
        mean_and_standard_error(&self.paths.iter().map(|p| p.mart_energy).collect::<Vec<_>>())
    }

    /// Per-fiber mean energies (drift, martingale); NaN for empty fibers.
    pub fn fiber_energies(&self) -> Vec<(f64, f64)> {
        let mut acc = vec![(0.0, 0.0, 0usize); self.fibers.len()];
        for p in &self.paths {
            let a = &mut acc[p.fiber];
            a.0 += p.drift_energy;
            a.1 += p.mart_energy;
            a.2 += 1;
        }
        acc.into_iter()
            .map(|(d, m, n)| (d / n as f64, m / n as f64))
            .collect()
    }

    /// Σ μ_x C(fiber x) for both energies.
    pub fn aggregated_energy(&self) -> (f64, f64) {
        self.fiber_energies()
            .iter()
            .zip(&self.fiber_weights)
            .filter(|(_, w)| **w > 0.0)
            .fold((0.0, 0.0), |(a, b), ((d, m), w)| (a + w * d, b + w * m))
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
        return Err(Error::Config("time grid must start at 0 and end at 1".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn record_indices(grid: &[f64], times: Option<&[f64]>) -> Result<Vec<usize>> {
    match times {
        None => Ok((0..grid.len()).collect()),
        Some(times) => times
            .iter()
            .map(|&t| {
                grid.iter()
                    .position(|g| (g - t).abs() <= GRID_MATCH_TOLERANCE)
                    .ok_or_else(|| Error::Config(format!("record time {t} is not a grid point")))
            })
            .collect(),
    }
}

struct PathPlan<'a> {
    grid: &'a [f64],
    record: &'a [usize],
    options: &'a SimulationOptions,
    seed: u64,
}

impl PathPlan<'_> {
    fn run(&self, fiber: &FiberModel, fiber_index: usize, id: u64) -> PathRecord {
        let d = fiber.dim();
        let n_rec = self.record.len();
        let mut rng = substream(self.seed, id);
        let mut y = vec![0.0; d];
        let pick = fiber.draw_terminal(&mut rng, &mut y);
        let mut terminal = vec![0.0; d];
        fiber.to_point(&y, &mut terminal);
        let mut martingale = vec![0.0; n_rec * d];
        let mut drifted = vec![0.0; n_rec * d];

        if fiber.is_dirac() {
            // Constant paths and zero energies by convention.
            let _ = pick;
            for slot in 0..n_rec {
                martingale[slot * d..(slot + 1) * d].copy_from_slice(&fiber.start);
                drifted[slot * d..(slot + 1) * d].copy_from_slice(&fiber.start);
            }
            return PathRecord {
                id,
                fiber: fiber_index,
                terminal,
                martingale,
                drifted,
                drift_energy: 0.0,
                mart_energy: 0.0,
            };
        }

        let sigma = fiber.sigma_ref;
        let clip = self.options.energy_clip;
        let mut beta = vec![0.0; d];
        let mut r = vec![0.0; d];
        let mut r_next = vec![0.0; d];
        let mut r_mid = vec![0.0; d];
        let mut mean = vec![0.0; d];
        let mut point = vec![0.0; d];
        let mut scratch = Vec::new();
        let (mut drift_energy, mut mart_energy) = (0.0, 0.0);
        let mut next_slot = 0;
        let last = self.grid.len() - 1;

        for k in 0..=last {
            let t = self.grid[k];
            let recording = next_slot < n_rec && self.record[next_slot] == k;
            let at_end = k == last;
            let mut densities = None;
            if !at_end && (recording || self.options.energy_rule == EnergyRule::LeftEndpoint) {
                densities = Some(fiber.evaluate(t, &r, &mut mean, &mut scratch));
            }
            if recording {
                // Several record slots may point at the same grid index.
                while next_slot < n_rec && self.record[next_slot] == k {
                    let slot = next_slot;
                    if at_end {
                        martingale[slot * d..(slot + 1) * d].copy_from_slice(&terminal);
                        drifted[slot * d..(slot + 1) * d].copy_from_slice(&terminal);
                    } else {
                        fiber.to_point(&mean, &mut point);
                        martingale[slot * d..(slot + 1) * d].copy_from_slice(&point);
                        fiber.to_point(&r, &mut point);
                        drifted[slot * d..(slot + 1) * d].copy_from_slice(&point);
                    }
                    next_slot += 1;
                }
            }
            if at_end {
                break;
            }

            let t_next = self.grid[k + 1];
            let dt = t_next - t;
            // β_{t'} | β_t ~ N(β_t (1−t')/(1−t), (t'−t)(1−t')/(1−t)).
            let shrink = (1.0 - t_next) / (1.0 - t);
            let sd = (dt * shrink).sqrt();
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                beta[c] = if k + 1 == last { 0.0 } else { beta[c] * shrink + sd * z };
                r_next[c] = t_next * y[c] + sigma * beta[c];
            }

            if t <= clip {
                match self.options.energy_rule {
                    EnergyRule::LeftEndpoint => {
                        let (fd, fm) = densities.expect("evaluated above");
                        drift_energy += 0.5 * fd * dt;
                        mart_energy += 0.5 * fm * dt / (1.0 - t);
                    }
                    EnergyRule::StratifiedRandom => {
                        let upper = t_next.min(clip);
                        let len = upper - t;
                        let v: f64 = rng.random();
                        let s = t + v * len;
                        let w = (s - t) / dt;
                        let sd_mid = sigma * ((s - t) * (t_next - s) / dt).sqrt();
                        for c in 0..d {
                            let z: f64 = rng.sample(StandardNormal);
                            r_mid[c] = r[c] + w * (r_next[c] - r[c]) + sd_mid * z;
                        }
                        let (fd, fm) = fiber.evaluate(s, &r_mid, &mut mean, &mut scratch);
                        drift_energy += 0.5 * fd * len;
                        mart_energy += 0.5 * fm * len / (1.0 - s);
                    }
                }
            }
            std::mem::swap(&mut r, &mut r_next);
        }

        PathRecord {
            id,
            fiber: fiber_index,
            terminal,
            martingale,
            drifted,
            drift_energy,
            mart_energy,
        }
    }
}

fn run_paths(
    fibers: &[FiberModel],
    counts: &[usize],
    grid: &[f64],
    seed: u64,
    options: &SimulationOptions,
) -> Result<(Vec<usize>, Vec<PathRecord>)> {
    validate_grid(grid)?;
    if !(options.energy_clip > 0.0 && options.energy_clip < 1.0) {
        return Err(Error::Config("energy clip must lie in (0, 1)".into()));
    }
    let record = record_indices(grid, options.record_times.as_deref())?;
    if record.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("record times must be non-decreasing".into()));
    }
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i, c)).collect();
    let plan = PathPlan {
        grid,
        record: &record,
        options,
        seed,
    };
    let job = |(p, &f): (usize, &usize)| plan.run(&fibers[f], f, p as u64);
    #[cfg(feature = "parallel")]
    let paths: Vec<PathRecord> = labels.par_iter().enumerate().map(job).collect();
    #[cfg(not(feature = "parallel"))]
    let paths: Vec<PathRecord> = labels.iter().enumerate().map(job).collect();
    Ok((record, paths))
}

pub fn simulate_follmer_martingale(
    fiber: &FiberModel,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    options: &SimulationOptions,
) -> Result<PathEnsemble> {
    let fibers = vec![fiber.clone()];
    let (record_indices, paths) = run_paths(&fibers, &[n_paths], grid, seed, options)?;
    Ok(PathEnsemble {
        dim: fiber.dim(),
        grid: grid.to_vec(),
        record_indices,
        seed,
        energy_rule: options.energy_rule,
        fibers,
        fiber_weights: vec![1.0],
        paths,
    })
}

/// Largest-remainder rounding of n·w to integers summing to n.
pub fn largest_remainder_counts(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Mixes discrete fibers over x ~ μ. Path counts per fiber follow the
/// μ-weights; the mixture Σ μ_i m_i must reproduce ν.
pub fn randomize_over_mu(
    mu: &DiscreteMeasure,
    fibers: &[FiberModel],
    nu: &DiscreteMeasure,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    options: &SimulationOptions,
) -> Result<PathEnsemble> {
    if fibers.len() != mu.len() {
        return Err(Error::Shape(format!("{} fibers for {} atoms of mu", fibers.len(), mu.len())));
    }
    let mut mixture = vec![0.0; nu.len()];
    for (i, fiber) in fibers.iter().enumerate() {
        if fiber.dim() != mu.dim() || nu.dim() != mu.dim() {
            return Err(Error::Dimension {
                expected: mu.dim(),
                found: fiber.dim(),
            });
        }
        let scale = 1.0 + crate::measures::norm(mu.atom(i));
        if crate::measures::distance(fiber.start(), mu.atom(i)) > BARYCENTER_TOLERANCE * scale {
            return Err(Error::InvalidMeasure(format!("fiber {i} does not start at atom {i} of mu")));
        }
        let law = fiber.discrete_law()?;
        for (y, w) in law.iter() {
            let j = nu
                .find_atom(y, crate::measures::ATOM_MERGE_TOLERANCE)
                .ok_or_else(|| Error::InvalidMeasure(format!("fiber {i} charges a point outside supp nu")))?;
            mixture[j] += mu.weights()[i] * w;
        }
    }
    let gap = mixture
        .iter()
        .zip(nu.weights())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if gap > MIXTURE_TOLERANCE {
        return Err(Error::InvalidMeasure(format!(
            "mixture of fiber laws differs from nu by {gap:.3e}"
        )));
    }
    let counts = largest_remainder_counts(mu.weights(), n_paths);
    let (record_indices, paths) = run_paths(fibers, &counts, grid, seed, options)?;
    Ok(PathEnsemble {
        dim: mu.dim(),
        grid: grid.to_vec(),
        record_indices,
        seed,
        energy_rule: options.energy_rule,
        fibers: fibers.to_vec(),
        fiber_weights: mu.weights().to_vec(),
        paths,
    })
}

/// Fibers of a solved discrete coupling, one per atom of its source.
pub fn fibers_from_coupling(m: &crate::measures::Coupling) -> Result<Vec<FiberModel>> {
    let (mu, nu) = (m.source(), m.target());
    (0..mu.len())
        .map(|i| {
            let q = m.conditional(i);
            let (atoms, weights): (Vec<Vec<f64>>, Vec<f64>) = q
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(j, w)| (nu.atom(j).to_vec(), *w))
                .unzip();
            let total: f64 = weights.iter().sum();
            let law = DiscreteMeasure::new(atoms, weights.iter().map(|w| w / total).collect())?;
            FiberModel::discrete(mu.atom(i).to_vec(), law)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BijectionCheck {
    pub cost_drift: f64,
    pub cost_drift_se: f64,
    pub cost_mart: f64,
    pub cost_mart_se: f64,
    /// |C_drift − C_mart| / max(1, C_mart).
    pub discrepancy: f64,
    /// max |M_t − X_t − (1 − t)u_t(X_t)| over paths and recorded times t < 1.
    pub max_pathwise_deviation: f64,
}

pub fn phi_bijection_check(ensemble: &PathEnsemble) -> Result<BijectionCheck> {
    let (cost_drift, cost_drift_se) = ensemble.drift_energy();
    let (cost_mart, cost_mart_se) = ensemble.mart_energy();
    let d = ensemble.dim;
    let mut worst = 0.0f64;
    for (slot, &k) in ensemble.record_indices.iter().enumerate() {
        let t = ensemble.grid[k];
        if t >= 1.0 {
            continue;
        }
        for (p, path) in ensemble.paths.iter().enumerate() {
            let fiber = &ensemble.fibers[path.fiber];
            if fiber.is_dirac() {
                continue;
            }
            let x = ensemble.drifted_point(p, slot);
            let coeff = fiber_coefficients(fiber, t, x)?;
            let m = ensemble.martingale_point(p, slot);
            for c in 0..d {
                worst = worst.max((m[c] - x[c] - (1.0 - t) * coeff.drift[c]).abs());
            }
        }
    }
    Ok(BijectionCheck {
        cost_drift,
        cost_drift_se,
        cost_mart,
        cost_mart_se,
        discrepancy: (cost_drift - cost_mart).abs() / cost_mart.max(1.0),
        max_pathwise_deviation: worst,
    })
}

/// Euler–Maruyama paths of dX = u dt + σ dB, kept separate from the exact
/// ensemble. Used only to cross-check laws.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerEnsemble {
    pub dim: usize,
    pub grid: Vec<f64>,
    pub record_indices: Vec<usize>,
    pub seed: u64,
    /// X at the recorded times, row-major (path, time, coordinate).
    pub drifted: Vec<f64>,
    pub n_paths: usize,
}

impl EulerEnsemble {
    pub fn column(&self, slot: usize, c: usize) -> Vec<f64> {
        let stride = self.record_indices.len() * self.dim;
        (0..self.n_paths)
            .map(|p| self.drifted[p * stride + slot * self.dim + c])
            .collect()
    }
}

pub fn simulate_follmer_euler(
    fiber: &FiberModel,
    grid: &[f64],
    n_paths: usize,
    seed: u64,
    record_times: Option<&[f64]>,
) -> Result<EulerEnsemble> {
    validate_grid(grid)?;
    let record = record_indices(grid, record_times)?;
    let d = fiber.dim();
    let sigma = fiber.sigma_ref;
    let job = |p: usize| -> Vec<f64> {
        // Offset the stream ids so Euler noise is independent of the exact scheme.
        let mut rng = substream(seed, (1u64 << 63) | p as u64);
        let mut out = vec![0.0; record.len() * d];
        let mut x = fiber.start.clone();
        let mut scratch = Vec::new();
        let mut mean = vec![0.0; d];
        let mut point = vec![0.0; d];
        let mut next_slot = 0;
        for k in 0..grid.len() {
            while next_slot < record.len() && record[next_slot] == k {
                out[next_slot * d..(next_slot + 1) * d].copy_from_slice(&x);
                next_slot += 1;
            }
            if k + 1 == grid.len() {
                break;
            }
            let (t, dt) = (grid[k], grid[k + 1] - grid[k]);
            let r = fiber.to_working(&x);
            if !fiber.is_dirac() {
                fiber.evaluate(t, &r, &mut mean, &mut scratch);
                fiber.to_point(&mean, &mut point);
            } else {
                point.copy_from_slice(&fiber.start);
            }
            for c in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                let u = (point[c] - x[c]) / (1.0 - t);
                x[c] += u * dt + if fiber.is_dirac() { 0.0 } else { sigma * dt.sqrt() * z };
            }
        }
        out
    };
    #[cfg(feature = "parallel")]
    let chunks: Vec<Vec<f64>> = (0..n_paths).into_par_iter().map(job).collect();
    #[cfg(not(feature = "parallel"))]
    let chunks: Vec<Vec<f64>> = (0..n_paths).map(job).collect();
    Ok(EulerEnsemble {
        dim: d,
        grid: grid.to_vec(),
        record_indices: record,
        seed,
        drifted: chunks.concat(),
        n_paths,
    })
}
