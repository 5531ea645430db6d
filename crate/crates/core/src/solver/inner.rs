//! The per-fiber problem sup_h [h·x − log Σ_j ν_j e^{ψ_j + h·y_j}].

use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{LinearProgram, Relation, Sense};
use crate::measures::DiscreteMeasure;

/// Minimal interior margin accepted by the relative-interior test.
pub const INTERIOR_MARGIN: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e14;

/// Orthonormal basis of the linear span of {y_j − ȳ}: the directions along
/// which h is identifiable.
#[derive(Debug, Clone)]
pub struct SupportGeometry {
    dim: usize,
    basis: DMatrix<f64>,
}

impl SupportGeometry {
    pub fn of(nu: &DiscreteMeasure) -> Self {
        let d = nu.dim();
        let cov = nu.moments().covariance;
        let (values, vectors) = linalg::sym_eigen(&cov);
        let top = values.iter().fold(0.0f64, |m, v| m.max(*v));
        let keep: Vec<usize> = (0..d)
            .filter(|&k| top > 0.0 && values[k] > 1e-12 * top)
            .collect();
        let mut basis = DMatrix::zeros(d, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            basis.set_column(c, &vectors.column(k));
        }
        Self { dim: d, basis }
    }

    /// Dimension of the affine hull of the support.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    fn reduce(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rank())
            .map(|c| (0..self.dim).map(|r| self.basis[(r, c)] * v[r]).sum())
            .collect()
    }

    fn lift(&self, g: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|r| (0..self.rank()).map(|c| self.basis[(r, c)] * g[c]).sum())
            .collect()
    }
}

/// Largest t such that x = Σ λ_j y_j with Σ λ_j = 1 and every λ_j ≥ t.
/// Non-positive (or `None`, when x is outside the hull) means x is not in
/// the relative interior.
pub fn interior_margin(x: &[f64], nu: &DiscreteMeasure) -> Result<Option<f64>> {
    let k = nu.len();
    let t = k;
    let mut lp = LinearProgram::new(Sense::Maximize, k + 1);
    lp.set_objective(t, 1.0);
    let mut row: Vec<(usize, f64)> = (0..k).map(|j| (j, 1.0)).collect();
    row.push((t, k as f64));
    lp.add_constraint(row, Relation::Eq, 1.0);
    for c in 0..nu.dim() {
        let mut row: Vec<(usize, f64)> = (0..k).map(|j| (j, nu.atom(j)[c])).collect();
        row.push((t, nu.atoms().map(|y| y[c]).sum()));
        lp.add_constraint(row, Relation::Eq, x[c]);
    }
    match lp.solve() {
        Ok(sol) => Ok(Some(sol.values[t])),
        Err(Error::LinearProgram(msg)) if msg.starts_with("infeasible") => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn check_interior(x: &[f64], nu: &DiscreteMeasure) -> Result<f64> {
    match interior_margin(x, nu)? {
        Some(m) if m > INTERIOR_MARGIN => Ok(m),
        other => Err(Error::NotIrreducible {
            fiber: None,
            margin: other.unwrap_or(0.0),
        }),
    }
}

/// Solution of one fiber problem.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub h: Vec<f64>,
    /// h·x − log Σ_j ν_j e^{ψ_j + h·y_j}.
    pub phi: f64,
    /// log of the conditional law m^h over ν-atoms.
    pub log_conditional: Vec<f64>,
    pub newton_steps: usize,
}

impl InnerSolution {
    pub fn conditional(&self) -> Vec<f64> {
        self.log_conditional.iter().map(|v| v.exp()).collect()
    }
}

/// Solves the fiber problem at x, checking first that x is in the relative
/// interior of conv(supp ν).
pub fn inner_dual_solve(x: &[f64], psi: &[f64], nu: &DiscreteMeasure, config: &SolverConfig) -> Result<InnerSolution> {
    if x.len() != nu.dim() {
        return Err(Error::Dimension {
            expected: nu.dim(),
            found: x.len(),
        });
    }
    if psi.len() != nu.len() {
        return Err(Error::Shape(format!("{} potentials for {} atoms", psi.len(), nu.len())));
    }
    check_interior(x, nu)?;
    let geometry = SupportGeometry::of(nu);
    solve_fiber(x, psi, nu, &geometry, None, config)
}

struct Eval {
    value: f64,
    grad: Vec<f64>,
    log_p: Vec<f64>,
}

fn evaluate(g: &[f64], z: &[Vec<f64>], base: &[f64]) -> Eval {
    let logits: Vec<f64> = base
        .iter()
        .zip(z)
        .map(|(b, zj)| b + zj.iter().zip(g).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    let lse = log_sum_exp(&logits);
    let log_p: Vec<f64> = logits.iter().map(|a| a - lse).collect();
    let r = g.len();
    let mut grad = vec![0.0; r];
    for (lp, zj) in log_p.iter().zip(z) {
        let p = lp.exp();
        for c in 0..r {
            grad[c] -= p * zj[c];
        }
    }
    Eval {
        value: -lse,
        grad,
        log_p,
    }
}

pub(crate) fn solve_fiber(
    x: &[f64],
    psi: &[f64],
    nu: &DiscreteMeasure,
    geometry: &SupportGeometry,
    warm_start: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<InnerSolution> {
    let r = geometry.rank();
    let base: Vec<f64> = nu
        .weights()
        .iter()
        .zip(psi)
        .map(|(w, p)| w.ln() + p)
        .collect();
    let z: Vec<Vec<f64>> = nu
        .atoms()
        .map(|y| {
            let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
            geometry.reduce(&diff)
        })
        .collect();
    let mut g = match warm_start {
        Some(h) => geometry.reduce(h),
        None => vec![0.0; r],
    };
    let mut cur = evaluate(&g, &z, &base);
    let mut steps = 0;
    loop {
        let gnorm = norm(&cur.grad);
        if gnorm < config.newton_gradient_tolerance {
            break;
        }
        if steps >= config.newton_max_steps {
            return Err(Error::NotConverged {
                context: "inner Newton solve".into(),
                iterations: steps,
                residual: gnorm,
            });
        }
        // Newton direction δ = Cov⁻¹ grad (the objective is concave with Hessian −Cov).
        let mut cov = DMatrix::<f64>::zeros(r, r);
        let mut mean = vec![0.0; r];
        for (lp, zj) in cur.log_p.iter().zip(&z) {
            let p = lp.exp();
            for a in 0..r {
                mean[a] += p * zj[a];
            }
        }
        for (lp, zj) in cur.log_p.iter().zip(&z) {
            let p = lp.exp();
            for a in 0..r {
                for b in 0..r {
                    cov[(a, b)] += p * (zj[a] - mean[a]) * (zj[b] - mean[b]);
                }
            }
        }
        let (values, vectors) = linalg::sym_eigen(&cov);
        let lo = values.min();
        let hi = values.max();
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_CONDITION {
            return Err(Error::DegenerateFiber {
                fiber: None,
                condition,
            });
        }
        let gv = DVector::from_column_slice(&cur.grad);
        let coords = vectors.transpose() * gv;
        let scaled = DVector::from_iterator(r, coords.iter().zip(values.iter()).map(|(c, l)| c / l));
        let delta = &vectors * scaled;
        let slope: f64 = delta.iter().zip(&cur.grad).map(|(a, b)| a * b).sum();

        let mut alpha = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = g.iter().zip(delta.iter()).map(|(a, b)| a + alpha * b).collect();
            let next = evaluate(&trial, &z, &base);
            let armijo = next.value >= cur.value + config.armijo * alpha * slope;
            // Near the optimum the value stalls at rounding level while the
            // gradient keeps shrinking; accept full steps on that evidence.
            let rounding = alpha == 1.0
                && norm(&next.grad) < 0.5 * gnorm
                && next.value >= cur.value - 1e-14 * (1.0 + cur.value.abs());
            if next.value.is_finite() && (armijo || rounding) {
                break Some((trial, next));
            }
            alpha *= config.backtrack;
            if alpha < 1e-20 {
                break None;
            }
        };
        let Some((trial, next)) = accepted else {
            return Err(Error::Numerical(format!(
                "line search stalled in inner Newton solve at gradient norm {gnorm:.3e}"
            )));
        };
        g = trial;
        cur = next;
        steps += 1;
        let hnorm = norm(&g);
        if hnorm > config.h_divergence_bound {
            return Err(Error::DualDivergence {
                fiber: None,
                norm: hnorm,
                bound: config.h_divergence_bound,
            });
        }
    }
    Ok(InnerSolution {
        h: geometry.lift(&g),
        phi: cur.value,
        log_conditional: cur.log_p,
        newton_steps: steps,
    })
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::one_dimensional(&[-1.0, 1.0], &[0.5, 0.5]).unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn symmetric_point() {
        let s = inner_dual_solve(&[0.0], &[0.0, 0.0], &two_point(), &SolverConfig::default()).unwrap();
        assert!(s.h[0].abs() < 1e-15);
        let c = s.conditional();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn off_center_point_matches_bisection() {
        let s = inner_dual_solve(&[0.5], &[0.0, 0.0], &two_point(), &SolverConfig::default()).unwrap();
        let oracle = bisect(|h| h.tanh() - 0.5, 0.0, 2.0);
        assert!((s.h[0] - oracle).abs() < 1e-12);
        let c = s.conditional();
        assert!((c[0] - 0.25).abs() < 1e-12 && (c[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn boundary_point_is_rejected() {
        let e = inner_dual_solve(&[1.0], &[0.0, 0.0], &two_point(), &SolverConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NotIrreducible { .. }));
        let e = inner_dual_solve(&[3.0], &[0.0, 0.0], &two_point(), &SolverConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NotIrreducible { .. }));
    }

    #[test]
    fn planar_support_pins_normal_component() {
        // ν on the line y₂ = 1 in R²; x on that line.
        let nu = DiscreteMeasure::new(vec![vec![-1.0, 1.0], vec![0.0, 1.0], vec![2.0, 1.0]], vec![0.3, 0.3, 0.4]).unwrap();
        let s = inner_dual_solve(&[0.5, 1.0], &[0.0; 3], &nu, &SolverConfig::default()).unwrap();
        assert!(s.h[1].abs() < 1e-14);
        let c = s.conditional();
        let bary: f64 = c.iter().zip(nu.atoms()).map(|(p, y)| p * y[0]).sum();
        assert!((bary - 0.5).abs() < 1e-12);
        // Off the line is outside the relative interior.
        assert!(inner_dual_solve(&[0.5, 1.1], &[0.0; 3], &nu, &SolverConfig::default()).is_err());
    }

    #[test]
    fn far_point_diverges_or_flags_degeneracy() {
        let nu = two_point();
        let config = SolverConfig {
            h_divergence_bound: 5.0,
            ..SolverConfig::default()
        };
        let e = inner_dual_solve(&[1.0 - 1e-9], &[0.0, 0.0], &nu, &config).unwrap_err();
        assert!(matches!(e, Error::DualDivergence { .. }), "{e:?}");
    }

    #[test]
    fn interior_margin_values() {
        let nu = DiscreteMeasure::one_dimensional(&[-1.0, 0.0, 1.0], &[0.2, 0.6, 0.2]).unwrap();
        // Max-min weight representation of 0 is uniform.
        assert!((interior_margin(&[0.0], &nu).unwrap().unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(interior_margin(&[2.0], &nu).unwrap().is_none());
    }
}
