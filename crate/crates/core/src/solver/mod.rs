//! Entropic martingale transport between discrete measures.
//!
//! The optimal coupling has the Gibbs form
//! m_ij = μ_i ν_j exp(φ_i + ψ_j + h_i·(y_j − x_i)). The solver alternates an
//! exact Newton solve of each fiber (h_i, φ_i), which fixes the row masses and
//! conditional barycenters, with an exact column rescaling of ψ.

mod classical;
mod inner;

pub use classical::{classical_sinkhorn_sp, classical_sinkhorn_sp_with, SchrodingerSolution};
pub use inner::{check_interior, inner_dual_solve, interior_margin, log_sum_exp, InnerSolution, SupportGeometry};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{check_convex_order, dot, mcov_discrete, Coupling, DiscreteMeasure, MartingaleCoupling};

/// Above this many coupling cells the up-front convex-order LP is skipped and
/// infeasibility surfaces through the interior test or dual divergence.
pub const CONVEX_ORDER_CHECK_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub marginal_tolerance: f64,
    pub martingale_tolerance: f64,
    pub max_outer_iterations: usize,
    pub newton_max_steps: usize,
    pub newton_gradient_tolerance: f64,
    pub h_divergence_bound: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Step shrink factor of the backtracking line search.
    pub backtrack: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            marginal_tolerance: 1e-10,
            martingale_tolerance: 1e-10,
            max_outer_iterations: 10_000,
            newton_max_steps: 50,
            newton_gradient_tolerance: 1e-12,
            h_divergence_bound: 1e6,
            armijo: 1e-4,
            backtrack: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("marginal_tolerance", self.marginal_tolerance),
            ("martingale_tolerance", self.martingale_tolerance),
            ("newton_gradient_tolerance", self.newton_gradient_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.h_divergence_bound > 1.0) {
            return Err(Error::Config("h_divergence_bound must exceed 1".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::Config("armijo constant must lie in (0, 1/2)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack factor must lie in (0, 1)".into()));
        }
        if self.max_outer_iterations == 0 || self.newton_max_steps == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Dual variables of the Gibbs form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialTriple {
    /// One value per μ-atom.
    pub phi: Vec<f64>,
    /// One value per ν-atom.
    pub psi: Vec<f64>,
    /// One vector per μ-atom.
    pub h: Vec<Vec<f64>>,
}

impl PotentialTriple {
    /// φ_i + ψ_j + h_i·(y_j − x_i).
    pub fn exponent(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, i: usize, j: usize) -> f64 {
        let (x, y) = (mu.atom(i), nu.atom(j));
        let lin: f64 = self.h[i].iter().zip(y.iter().zip(x)).map(|(h, (a, b))| h * (a - b)).sum();
        self.phi[i] + self.psi[j] + lin
    }

    pub fn assemble(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<MartingaleCoupling> {
        let k = nu.len();
        let weights = (0..mu.len() * k)
            .map(|ij| {
                let (i, j) = (ij / k, ij % k);
                mu.weights()[i] * nu.weights()[j] * self.exponent(mu, nu, i, j).exp()
            })
            .collect();
        Coupling::new(mu.clone(), nu.clone(), weights)
    }

    /// Shifts ψ by −(a + b·y) and compensates in φ and h so the Gibbs exponent
    /// is unchanged, choosing (a, b) so that Σ ν_j ψ_j = 0 and Σ ν_j ψ_j y_j = 0.
    pub fn gauge_fixed(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let (a, b) = affine_part(&self.psi, nu);
        let psi = nu
            .atoms()
            .zip(&self.psi)
            .map(|(y, p)| p - a - dot(&b, y))
            .collect();
        let phi = mu
            .atoms()
            .zip(&self.phi)
            .map(|(x, p)| p + a + dot(&b, x))
            .collect();
        let h = self
            .h
            .iter()
            .map(|hi| hi.iter().zip(&b).map(|(u, v)| u + v).collect())
            .collect();
        Self { phi, psi, h }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.iter().chain(&self.psi).chain(self.h.iter().flatten()).all(|v| v.is_finite())
    }
}

/// ν-weighted least-squares affine fit a + b·y of ψ, restricted to the span of
/// the centred support so it is well defined when ν lies on a hyperplane.
fn affine_part(psi: &[f64], nu: &DiscreteMeasure) -> (f64, Vec<f64>) {
    let d = nu.dim();
    let mean = nu.mean();
    let psi_mean: f64 = nu.weights().iter().zip(psi).map(|(w, p)| w * p).sum();
    let moments = nu.moments();
    let mut cross = DVector::<f64>::zeros(d);
    for ((y, w), p) in nu.iter().zip(psi) {
        for c in 0..d {
            cross[c] += w * (p - psi_mean) * (y[c] - mean[c]);
        }
    }
    let (values, vectors) = crate::linalg::sym_eigen(&moments.covariance);
    let top = values.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut b = DVector::<f64>::zeros(d);
    for k in 0..d {
        if top > 0.0 && values[k] > 1e-12 * top {
            let u = vectors.column(k);
            b += u * (u.dot(&cross) / values[k]);
        }
    }
    let b: Vec<f64> = b.iter().copied().collect();
    let a = psi_mean - dot(&b, &mean);
    (a, b)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub coupling: MartingaleCoupling,
    pub potentials: PotentialTriple,
    pub primal_value: f64,
    pub dual_value: f64,
    pub iterations: usize,
    /// Σ_j |column sum − ν_j| (rows are exact up to rounding).
    pub marginal_residual: f64,
    /// max_i |Σ_j m_ij (y_j − x_i)| / μ_i.
    pub martingale_residual: f64,
    pub converged: bool,
    /// Dual objective of the ψ iterate at each outer iteration.
    pub dual_history: Vec<f64>,
}

pub fn sinkhorn_msb(mu: &DiscreteMeasure, nu: &DiscreteMeasure, config: &SolverConfig) -> Result<SolveReport> {
    config.validate()?;
    if mu.dim() != nu.dim() {
        return Err(Error::Dimension {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    if mu.len() * nu.len() <= CONVEX_ORDER_CHECK_LIMIT && !check_convex_order(mu, nu)?.in_convex_order {
        return Err(Error::NotInConvexOrder(
            "no martingale coupling has these marginals".into(),
        ));
    }
    let geometry = SupportGeometry::of(nu);
    for (i, x) in mu.atoms().enumerate() {
        check_interior(x, nu).map_err(|e| e.with_fiber(i))?;
    }

    let (n, k) = (mu.len(), nu.len());
    let log_mu: Vec<f64> = mu.weights().iter().map(|w| w.ln()).collect();
    let mut psi = vec![0.0; k];
    let mut h: Vec<Vec<f64>> = vec![vec![0.0; mu.dim()]; n];
    let mut dual_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut phi = vec![0.0; n];

    loop {
        iterations += 1;
        let solutions = solve_fibers(mu, nu, &psi, &h, &geometry, config)?;
        for (i, s) in solutions.iter().enumerate() {
            phi[i] = s.phi;
            h[i] = s.h.clone();
        }
        let dual = dot(nu.weights(), &psi) + dot(mu.weights(), &phi);
        dual_history.push(dual);

        // log column sums: log Σ_i μ_i m^h_i(j).
        let mut col = vec![0.0; n];
        let log_cols: Vec<f64> = (0..k)
            .map(|j| {
                for i in 0..n {
                    col[i] = log_mu[i] + solutions[i].log_conditional[j];
                }
                log_sum_exp(&col)
            })
            .collect();
        let marginal: f64 = log_cols
            .iter()
            .zip(nu.weights())
            .map(|(lc, w)| (lc.exp() - w).abs())
            .sum();
        let martingale = solutions
            .iter()
            .enumerate()
            .map(|(i, s)| fiber_drift(mu.atom(i), nu, &s.log_conditional))
            .fold(0.0, f64::max);
        log::trace!("iteration {iterations}: dual {dual:.15e} marginal {marginal:.3e} martingale {martingale:.3e}");
        if marginal < config.marginal_tolerance && martingale < config.martingale_tolerance {
            converged = true;
            break;
        }
        if iterations >= config.max_outer_iterations {
            break;
        }
        for j in 0..k {
            psi[j] -= log_cols[j] - nu.weights()[j].ln();
        }
    }

    let potentials = PotentialTriple { phi, psi, h }.gauge_fixed(mu, nu);
    let coupling = potentials.assemble(mu, nu)?;
    let marginal_residual = coupling.column_l1_residual().max(coupling.marginal_residual());
    let martingale_residual = coupling.martingale_residual();
    let primal_value = primal_value(&coupling)?;
    let dual_value = dot(nu.weights(), &potentials.psi) + dot(mu.weights(), &potentials.phi);
    if !converged {
        log::warn!(
            "martingale Sinkhorn stopped after {iterations} iterations (marginal {marginal_residual:.3e}, martingale {martingale_residual:.3e})"
        );
    }
    Ok(SolveReport {
        coupling,
        potentials,
        primal_value,
        dual_value,
        iterations,
        marginal_residual,
        martingale_residual,
        converged,
        dual_history,
    })
}

fn fiber_drift(x: &[f64], nu: &DiscreteMeasure, log_p: &[f64]) -> f64 {
    let mut drift = vec![0.0; x.len()];
    for (y, lp) in nu.atoms().zip(log_p) {
        let p = lp.exp();
        for c in 0..x.len() {
            drift[c] += p * (y[c] - x[c]);
        }
    }
    dot(&drift, &drift).sqrt()
}

fn solve_fibers(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    psi: &[f64],
    warm: &[Vec<f64>],
    geometry: &SupportGeometry,
    config: &SolverConfig,
) -> Result<Vec<InnerSolution>> {
    let solve = |i: usize| {
        inner::solve_fiber(mu.atom(i), psi, nu, geometry, Some(&warm[i]), config).map_err(|e| e.with_fiber(i))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..mu.len()).into_par_iter().map(solve).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..mu.len()).map(solve).collect()
    }
}

/// H(m | μ⊗ν), computed jointly and as Σ_i μ_i H(m_i | ν); the two must agree.
pub fn primal_value(m: &MartingaleCoupling) -> Result<f64> {
    let joint = m.entropy_against_product().finite("H(m | mu x nu)")?;
    let mu = m.source();
    let nu = m.target();
    let mut fiberwise = 0.0;
    for i in 0..m.rows() {
        let cond = m.conditional(i);
        let h = crate::measures::relative_entropy(&cond, nu.weights())?.finite("H(m_x | nu)")?;
        fiberwise += mu.weights()[i] * h;
    }
    let gap = (joint - fiberwise).abs();
    if gap > 1e-12 * (1.0 + joint.abs()) {
        return Err(Error::Numerical(format!(
            "joint and fiberwise entropies differ by {gap:.3e}; the coupling does not have the declared first marginal"
        )));
    }
    Ok(joint)
}

/// Σ_j ν_j ψ_j + Σ_i μ_i sup_h [h·x_i − log Σ_j ν_j e^{ψ_j + h·y_j}].
pub fn dual_value(psi: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure, config: &SolverConfig) -> Result<f64> {
    if psi.len() != nu.len() {
        return Err(Error::Shape(format!("{} potentials for {} atoms", psi.len(), nu.len())));
    }
    let geometry = SupportGeometry::of(nu);
    let mut total = dot(nu.weights(), psi);
    for (i, (x, w)) in mu.iter().enumerate() {
        check_interior(x, nu).map_err(|e| e.with_fiber(i))?;
        let s = inner::solve_fiber(x, psi, nu, &geometry, None, config).map_err(|e| e.with_fiber(i))?;
        total += w * s.phi;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VpValue {
    pub schrodinger: f64,
    pub mcov: f64,
    pub value: f64,
}

/// SP(μ̄, ν) + MCov(μ̄, μ).
pub fn vp_value(mu_bar: &DiscreteMeasure, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    vp_components(mu_bar, mu, nu).map(|v| v.value)
}

pub fn vp_components(mu_bar: &DiscreteMeasure, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<VpValue> {
    let sp = classical_sinkhorn_sp(mu_bar, nu)?;
    let (mcov, _) = mcov_discrete(mu_bar, mu)?;
    Ok(VpValue {
        schrodinger: sp.value,
        mcov,
        value: sp.value + mcov,
    })
}

/// The base measure h#μ: atoms h(x_i) with weights μ_i. Coincident h-values
/// are merged, with a warning.
pub fn extract_base_measure(report: &SolveReport, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    if !report.converged {
        return Err(Error::NotConverged {
            context: "base measure extraction from an unconverged solve".into(),
            iterations: report.iterations,
            residual: report.marginal_residual.max(report.martingale_residual),
        });
    }
    if report.potentials.h.len() != mu.len() {
        return Err(Error::Shape("report does not match mu".into()));
    }
    let flat: Vec<f64> = report.potentials.h.iter().flatten().copied().collect();
    let base = DiscreteMeasure::from_flat(mu.dim(), flat, mu.weights().to_vec())?;
    if base.len() < mu.len() {
        log::warn!(
            "base measure has {} atoms for {} source atoms: h is not injective on this instance",
            base.len(),
            mu.len()
        );
    }
    Ok(base)
}

/// Largest |log(m_ij / (μ_i ν_j)) − exponent_ij| over positive cells.
pub fn gibbs_residual(report: &SolveReport) -> f64 {
    let m = &report.coupling;
    let (mu, nu) = (m.source(), m.target());
    let mut worst = 0.0f64;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if v > 0.0 {
                let lhs = (v / (mu.weights()[i] * nu.weights()[j])).ln();
                worst = worst.max((lhs - report.potentials.exponent(mu, nu, i, j)).abs());
            }
        }
    }
    worst
}

/// Builds a ν on `atoms` and a μ with barycenters of random kernels, so the
/// pair is in convex order with every μ-atom strictly interior.
pub fn feasible_instance_from_kernels(
    atoms: Vec<Vec<f64>>,
    source_weights: &[f64],
    kernels: &[Vec<f64>],
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let k = atoms.len();
    let d = atoms.first().map(Vec::len).unwrap_or(0);
    let mut nu_w = vec![0.0; k];
    let mut xs = Vec::with_capacity(source_weights.len());
    for (w, kern) in source_weights.iter().zip(kernels) {
        let s: f64 = kern.iter().sum();
        let mut x = vec![0.0; d];
        for (j, kj) in kern.iter().enumerate() {
            let p = kj / s;
            nu_w[j] += w * p;
            for c in 0..d {
                x[c] += p * atoms[j][c];
            }
        }
        xs.push(x);
    }
    let total: f64 = nu_w.iter().sum();
    let nu_w: Vec<f64> = nu_w.iter().map(|v| v / total).collect();
    let nu = DiscreteMeasure::new(atoms, nu_w)?;
    let mu = DiscreteMeasure::new(xs, source_weights.to_vec())?;
    Ok((mu, nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1(a: &[f64], w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::one_dimensional(a, w).unwrap()
    }

    #[test]
    fn single_centered_fiber() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[-2.0, 0.0, 2.0], &[0.25, 0.5, 0.25]);
        let r = sinkhorn_msb(&mu, &nu, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.primal_value.abs() < 1e-14);
        assert!(r.potentials.psi.iter().chain(&r.potentials.phi).all(|v| v.abs() < 1e-12));
        assert!(r.potentials.h[0][0].abs() < 1e-12);
    }

    #[test]
    fn unique_two_by_two_coupling() {
        let mu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[-2.0, 2.0], &[0.5, 0.5]);
        let r = sinkhorn_msb(&mu, &nu, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        let expected = [0.375, 0.125, 0.125, 0.375];
        for (a, b) in r.coupling.weights().iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let value = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((r.primal_value - value).abs() < 1e-10);
        assert!((value - 0.130812).abs() < 1e-6);
    }

    #[test]
    fn gauge_is_normalised() {
        let mu = m1(&[-0.5, 0.2], &[0.4, 0.6]);
        let nu = m1(&[-2.0, 0.0, 1.5], &[0.3, 0.3, 0.4]);
        let nu = nu.translated(&[mu.mean()[0] - nu.mean()[0]]);
        let r = sinkhorn_msb(&mu, &nu, &SolverConfig::default()).unwrap();
        let p = &r.potentials;
        let s0: f64 = nu.weights().iter().zip(&p.psi).map(|(w, v)| w * v).sum();
        let s1: f64 = nu.iter().zip(&p.psi).map(|((y, w), v)| w * v * y[0]).sum();
        assert!(s0.abs() < 1e-12 && s1.abs() < 1e-12);
        assert!(gibbs_residual(&r) < 1e-12);
    }

    #[test]
    fn infeasible_pair_is_rejected() {
        let mu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[0.0], &[1.0]);
        assert!(matches!(
            sinkhorn_msb(&mu, &nu, &SolverConfig::default()),
            Err(Error::NotInConvexOrder(_))
        ));
    }

    #[test]
    fn boundary_atom_is_not_irreducible() {
        // μ ⪯c ν, but the atom at 1 sits on the hull boundary.
        let mu = m1(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = m1(&[-1.0, 1.0], &[0.25, 0.75]);
        match sinkhorn_msb(&mu, &nu, &SolverConfig::default()) {
            Err(Error::NotIrreducible { fiber, .. }) => assert_eq!(fiber, Some(1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            marginal_tolerance: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SolverConfig {
            h_divergence_bound: 1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn dual_value_trivial() {
        let mu = m1(&[0.0], &[1.0]);
        let nu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
        let d = dual_value(&[0.0, 0.0], &mu, &nu, &SolverConfig::default()).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn vp_trivial() {
        let d = DiscreteMeasure::dirac(&[0.0]);
        assert!(vp_value(&d, &d, &d).unwrap().abs() < 1e-15);
    }
}
