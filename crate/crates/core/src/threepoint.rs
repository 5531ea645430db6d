//! Three-point marginals μ on (−1, 0, 1) and ν on (−2, 0, 2).
//!
//! Every martingale coupling is π(u, v) with u = π(−1,−2), v = π(0,−2) and
//! w = p₂ − u − v, so the entropy and Bass problems become two-dimensional.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, Relation, Sense};
use crate::measures::{Coupling, DiscreteMeasure};
use crate::normal;

pub const MU_ATOMS: [f64; 3] = [-1.0, 0.0, 1.0];
pub const NU_ATOMS: [f64; 3] = [-2.0, 0.0, 2.0];
const WEIGHT_TOLERANCE: f64 = 1e-12;
/// Entries below this count as vanishing when reporting boundary solutions.
const BOUNDARY_ENTRY: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreePointInstance {
    pub p1: f64,
    pub q1: f64,
    pub r1: f64,
    pub p2: f64,
    pub q2: f64,
    pub r2: f64,
}

/// Each entry of π(u, v) as c + a·u + b·v.
type Affine = (f64, f64, f64);

impl ThreePointInstance {
    pub fn new(p1: f64, q1: f64, p2: f64, q2: f64) -> Result<Self> {
        let inst = ThreePointInstance {
            p1,
            q1,
            r1: 1.0 - p1 - q1,
            p2,
            q2,
            r2: 1.0 - p2 - q2,
        };
        for (name, w) in [
            ("p1", inst.p1),
            ("q1", inst.q1),
            ("r1", inst.r1),
            ("p2", inst.p2),
            ("q2", inst.q2),
            ("r2", inst.r2),
        ] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::field(name, format!("weight must be positive, got {w}")));
            }
        }
        // Column 0 of π(u, v) sums to 3p₁/2 + q₁ + r₁/2 − 2p₂ whatever (u, v) is;
        // it must equal q₂, which is the equal-means condition.
        let forced = 1.5 * p1 + inst.q1 + 0.5 * inst.r1 - 2.0 * p2;
        if (forced - q2).abs() > WEIGHT_TOLERANCE {
            return Err(Error::NotInConvexOrder(format!(
                "means differ: mu has mean {:.6}, nu has mean {:.6}",
                inst.r1 - p1,
                2.0 * (inst.r2 - p2)
            )));
        }
        let (lo, hi) = inst.sum_interval();
        if lo > hi {
            return Err(Error::NotInConvexOrder(format!(
                "the feasible polygon is empty (u + v must lie in [{lo:.6}, {hi:.6}])"
            )));
        }
        Ok(inst)
    }

    /// Paper instance used throughout the examples.
    pub fn reference() -> Self {
        ThreePointInstance::new(0.40, 0.46, 0.43, 0.27).expect("valid instance")
    }

    /// Interval of attainable u + v given the box constraints on u and v.
    fn sum_interval(&self) -> (f64, f64) {
        let lo = (self.p2 - self.r1 / 4.0).max(self.p1 / 2.0);
        let hi = self.p2.min(0.75 * self.p1 + self.q1 / 2.0);
        (lo, hi)
    }

    pub fn mu(&self) -> DiscreteMeasure {
        DiscreteMeasure::one_dimensional(&MU_ATOMS, &[self.p1, self.q1, self.r1]).expect("valid weights")
    }

    pub fn nu(&self) -> DiscreteMeasure {
        DiscreteMeasure::one_dimensional(&NU_ATOMS, &[self.p2, self.q2, self.r2]).expect("valid weights")
    }

    fn entries(&self) -> [Affine; 9] {
        let (p1, q1, r1, p2) = (self.p1, self.q1, self.r1, self.p2);
        [
            (0.0, 1.0, 0.0),
            (1.5 * p1, -2.0, 0.0),
            (-0.5 * p1, 1.0, 0.0),
            (0.0, 0.0, 1.0),
            (q1, 0.0, -2.0),
            (0.0, 0.0, 1.0),
            (p2, -1.0, -1.0),
            (0.5 * r1 - 2.0 * p2, 2.0, 2.0),
            (p2 + 0.5 * r1, -1.0, -1.0),
        ]
    }

    /// The six constraints of S as (name, violation), positive when violated.
    fn violations(&self, u: f64, v: f64) -> [(&'static str, f64); 6] {
        let s = u + v;
        [
            ("u >= p1/2", self.p1 / 2.0 - u),
            ("u <= 3p1/4", u - 0.75 * self.p1),
            ("v >= 0", -v),
            ("v <= q1/2", v - self.q1 / 2.0),
            ("u + v >= p2 - r1/4", self.p2 - self.r1 / 4.0 - s),
            ("u + v <= p2", s - self.p2),
        ]
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        self.violations(u, v).iter().all(|(_, a)| *a <= 0.0)
    }

    /// Center and radius of the largest disc inside S.
    pub fn chebyshev_center(&self) -> Result<(f64, f64, f64)> {
        let mut lp = LinearProgram::new(Sense::Maximize, 3);
        lp.set_objective(2, 1.0);
        let r2 = std::f64::consts::SQRT_2;
        lp.add_constraint(vec![(0, 1.0), (2, -1.0)], Relation::Ge, self.p1 / 2.0);
        lp.add_constraint(vec![(0, 1.0), (2, 1.0)], Relation::Le, 0.75 * self.p1);
        lp.add_constraint(vec![(1, 1.0), (2, -1.0)], Relation::Ge, 0.0);
        lp.add_constraint(vec![(1, 1.0), (2, 1.0)], Relation::Le, self.q1 / 2.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0), (2, -r2)], Relation::Ge, self.p2 - self.r1 / 4.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0), (2, r2)], Relation::Le, self.p2);
        let sol = lp.solve()?;
        Ok((sol.values[0], sol.values[1], sol.values[2]))
    }

    fn interior_start(&self) -> Result<Vector2<f64>> {
        let (u, v, radius) = self.chebyshev_center()?;
        if radius <= 1e-12 {
            return Err(Error::InfeasibleParameters {
                constraint: "feasible polygon has empty interior".into(),
                amount: radius,
            });
        }
        Ok(Vector2::new(u, v))
    }
}

pub type Matrix3x3 = [[f64; 3]; 3];

/// π(u, v); rows indexed by x ∈ {−1, 0, 1}, columns by y ∈ {−2, 0, 2}.
pub fn parametrize_coupling(inst: &ThreePointInstance, u: f64, v: f64) -> Result<Matrix3x3> {
    let scale = 1e-15;
    if let Some((name, amount)) = inst.violations(u, v).into_iter().find(|(_, a)| *a > scale) {
        return Err(Error::InfeasibleParameters {
            constraint: name.into(),
            amount,
        });
    }
    Ok(evaluate_matrix(inst, u, v))
}

fn evaluate_matrix(inst: &ThreePointInstance, u: f64, v: f64) -> Matrix3x3 {
    let e = inst.entries();
    let mut m = [[0.0; 3]; 3];
    for (k, (c, a, b)) in e.iter().enumerate() {
        m[k / 3][k % 3] = c + a * u + b * v;
    }
    m
}

pub fn to_coupling(inst: &ThreePointInstance, m: &Matrix3x3) -> Result<Coupling> {
    let rows: Vec<Vec<f64>> = m.iter().map(|r| r.to_vec()).collect();
    Coupling::from_rows(inst.mu(), inst.nu(), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreePointOptimum {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub matrix: Matrix3x3,
    /// H(π | μ⊗ν) for the entropy problem, Σ_x μ_x W₂²(π_x/μ_x, γ) for Bass.
    pub value: f64,
    /// Residuals of the first-order system at (u, v).
    pub residual: [f64; 2],
    pub iterations: usize,
    /// (row, column) of entries that vanish at the optimizer.
    pub boundary_entries: Vec<(usize, usize)>,
}

fn boundary_entries(m: &Matrix3x3) -> Vec<(usize, usize)> {
    (0..9)
        .filter(|k| m[k / 3][k % 3] < BOUNDARY_ENTRY)
        .map(|k| (k / 3, k % 3))
        .collect()
}

/// Largest step in (0, 1] along d keeping every entry at least `keep` times
/// its current value.
fn fraction_to_boundary(inst: &ThreePointInstance, x: &Vector2<f64>, d: &Vector2<f64>, keep: f64) -> f64 {
    let mut step: f64 = 1.0;
    for (c, a, b) in inst.entries() {
        let val = c + a * x[0] + b * x[1];
        let rate = a * d[0] + b * d[1];
        if rate < 0.0 {
            step = step.min((1.0 - keep) * val / -rate);
        }
    }
    step
}

/// Residuals of the polynomial first-order system of the entropy problem:
///   u(2u − p₁)(r₁ − 4w)² − (3p₁ − 4u)² w (r₁ + 2w),
///   v²(r₁ − 4w)² − 2(q₁ − 2v)² w (r₁ + 2w).
pub fn entropy_system_residual(inst: &ThreePointInstance, u: f64, v: f64) -> [f64; 2] {
    let (p1, q1, r1) = (inst.p1, inst.q1, inst.r1);
    let w = inst.p2 - u - v;
    let a = (r1 - 4.0 * w).powi(2);
    let b = w * (r1 + 2.0 * w);
    [
        u * (2.0 * u - p1) * a - (3.0 * p1 - 4.0 * u).powi(2) * b,
        v * v * a - 2.0 * (q1 - 2.0 * v).powi(2) * b,
    ]
}

fn entropy_value(inst: &ThreePointInstance, m: &Matrix3x3) -> f64 {
    let mu = [inst.p1, inst.q1, inst.r1];
    let nu = [inst.p2, inst.q2, inst.r2];
    let mut h = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let p = m[i][j];
            if p > 0.0 {
                h += p * (p / (mu[i] * nu[j])).ln();
            }
        }
    }
    h
}

/// Minimizes F(u, v) = Σ π log π by damped Newton from the Chebyshev center.
pub fn entropy_minimize(inst: &ThreePointInstance) -> Result<ThreePointOptimum> {
    let entries = inst.entries();
    let objective = |x: &Vector2<f64>| -> f64 {
        entries
            .iter()
            .map(|(c, a, b)| {
                let p = c + a * x[0] + b * x[1];
                if p > 0.0 {
                    p * p.ln()
                } else {
                    0.0
                }
            })
            .sum()
    };
    let mut x = inst.interior_start()?;
    let mut iterations = 0;
    for _ in 0..200 {
        iterations += 1;
        let mut g = Vector2::zeros();
        let mut h = Matrix2::zeros();
        for (c, a, b) in entries {
            let p = c + a * x[0] + b * x[1];
            let dp = Vector2::new(a, b);
            g += dp * (p.ln() + 1.0);
            if a != 0.0 || b != 0.0 {
                h += dp * dp.transpose() / p;
            }
        }
        let d = -h.cholesky().ok_or_else(|| Error::Numerical("entropy Hessian is not positive definite".into()))?.solve(&g);
        let decrement = -g.dot(&d);
        if decrement < 1e-30 {
            break;
        }
        let mut step = fraction_to_boundary(inst, &x, &d, 0.01);
        let f0 = objective(&x);
        while step > 1e-16 {
            let trial = x + d * step;
            if objective(&trial) <= f0 - 1e-4 * step * decrement || decrement < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        x += d * step;
        if (d * step).amax() < 1e-17 {
            break;
        }
    }
    let matrix = evaluate_matrix(inst, x[0], x[1]);
    Ok(ThreePointOptimum {
        u: x[0],
        v: x[1],
        w: inst.p2 - x[0] - x[1],
        value: entropy_value(inst, &matrix),
        residual: entropy_system_residual(inst, x[0], x[1]),
        boundary_entries: boundary_entries(&matrix),
        matrix,
        iterations,
    })
}

/// W₂²(p, γ) for a one-dimensional discrete p and γ = N(0, 1), using the
/// quantile coupling: m₂(p) + 1 − 2Σ_j y_j [φ(Φ⁻¹(F_{j−1})) − φ(Φ⁻¹(F_j))].
pub fn w2_to_standard_gaussian(p: &DiscreteMeasure) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: p.dim(),
        });
    }
    let mut atoms: Vec<(f64, f64)> = p.iter().map(|(y, w)| (y[0], w)).collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let density_at = |f: f64| {
        if f <= 0.0 || f >= 1.0 {
            0.0
        } else {
            normal::pdf(normal::inverse_cdf(f))
        }
    };
    let second: f64 = atoms.iter().map(|(y, w)| w * y * y).sum();
    let mut cumulative = 0.0;
    let mut cross = 0.0;
    let n = atoms.len();
    for (j, (y, w)) in atoms.iter().enumerate() {
        let before = density_at(cumulative);
        cumulative += w;
        let after = if j + 1 == n { 0.0 } else { density_at(cumulative) };
        cross += y * (before - after);
    }
    Ok(second + 1.0 - 2.0 * cross)
}

/// Σ_x μ_x W₂²(π_x / μ_x, γ).
pub fn bass_objective(inst: &ThreePointInstance, u: f64, v: f64) -> Result<f64> {
    let m = parametrize_coupling(inst, u, v)?;
    let mu = [inst.p1, inst.q1, inst.r1];
    let mut total = 0.0;
    for (row, mass) in m.iter().zip(mu) {
        let w: Vec<f64> = row.iter().map(|p| (p / mass).max(0.0)).collect();
        let s: f64 = w.iter().sum();
        let (atoms, weights): (Vec<f64>, Vec<f64>) = NU_ATOMS
            .iter()
            .zip(&w)
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, w)| (*a, w / s))
            .unzip();
        total += mass * w2_to_standard_gaussian(&DiscreteMeasure::one_dimensional(&atoms, &weights)?)?;
    }
    Ok(total)
}

/// Residuals of the Bass first-order system:
///   Φ⁻¹(u/p₁) − Φ⁻¹(3/2 − u/p₁) − T(w),  Φ⁻¹(v/q₁) − Φ⁻¹(1 − v/q₁) − T(w),
/// with T(w) = Φ⁻¹(w/r₁) − Φ⁻¹(1/2 − w/r₁).
pub fn bass_system_residual(inst: &ThreePointInstance, u: f64, v: f64) -> [f64; 2] {
    let q = normal::inverse_cdf;
    let w = inst.p2 - u - v;
    let t = q(w / inst.r1) - q(0.5 - w / inst.r1);
    [
        q(u / inst.p1) - q(1.5 - u / inst.p1) - t,
        q(v / inst.q1) - q(1.0 - v / inst.q1) - t,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BassResult {
    /// Direct minimization of the Bass objective.
    pub optimum: ThreePointOptimum,
    /// Root of the first-order system found by Newton from the entropy optimizer.
    pub system_root: [f64; 2],
    pub system_iterations: usize,
    /// max(|Δu|, |Δv|) between the two routes.
    pub route_gap: f64,
}

/// Gradient by Richardson-extrapolated central differences and Hessian by
/// second differences, both from objective values only.
fn finite_difference_model(f: &dyn Fn(&Vector2<f64>) -> Result<f64>, x: &Vector2<f64>) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    let central = |k: usize, h: f64| -> Result<f64> {
        let mut a = *x;
        let mut b = *x;
        a[k] += h;
        b[k] -= h;
        Ok((f(&a)? - f(&b)?) / (2.0 * h))
    };
    let h = 2e-4;
    let mut g = Vector2::zeros();
    for k in 0..2 {
        let coarse = central(k, h)?;
        let fine = central(k, h / 2.0)?;
        g[k] = (4.0 * fine - coarse) / 3.0;
    }
    let e = 1e-4;
    let f0 = f(x)?;
    let at = |du: f64, dv: f64| f(&(x + Vector2::new(du, dv)));
    let huu = (at(e, 0.0)? - 2.0 * f0 + at(-e, 0.0)?) / (e * e);
    let hvv = (at(0.0, e)? - 2.0 * f0 + at(0.0, -e)?) / (e * e);
    let huv = (at(e, e)? - at(e, -e)? - at(-e, e)? + at(-e, -e)?) / (4.0 * e * e);
    Ok((g, Matrix2::new(huu, huv, huv, hvv)))
}

pub fn bass_minimize(inst: &ThreePointInstance) -> Result<BassResult> {
    let objective = |x: &Vector2<f64>| bass_objective(inst, x[0], x[1]);
    let mut x = inst.interior_start()?;
    let mut iterations = 0;
    for _ in 0..200 {
        iterations += 1;
        // Objective values are sampled up to 2e-4 away from x.
        let (g, h) = finite_difference_model(&objective, &x)?;
        if g.amax() < 1e-11 {
            break;
        }
        let d = match h.cholesky() {
            Some(c) => -c.solve(&g),
            None => -g,
        };
        let mut step = fraction_to_boundary(inst, &x, &d, 0.05);
        // Close to the optimum the decrease of G drops below its rounding
        // level, so small interior Newton steps are taken without line search.
        let local = d.amax() < 1e-7 && step == 1.0;
        if !local {
            let f0 = objective(&x)?;
            let slope = g.dot(&d);
            while step > 1e-14 {
                let trial = x + d * step;
                if objective(&trial)? <= f0 + 1e-4 * step * slope {
                    break;
                }
                step *= 0.5;
            }
            if step <= 1e-14 {
                break;
            }
        }
        x += d * step;
        if (d * step).amax() < 1e-15 {
            break;
        }
    }
    let matrix = evaluate_matrix(inst, x[0], x[1]);
    let optimum = ThreePointOptimum {
        u: x[0],
        v: x[1],
        w: inst.p2 - x[0] - x[1],
        value: objective(&x)?,
        residual: bass_system_residual(inst, x[0], x[1]),
        boundary_entries: boundary_entries(&matrix),
        matrix,
        iterations,
    };

    let entropy = entropy_minimize(inst)?;
    let (root, system_iterations) = solve_bass_system(inst, Vector2::new(entropy.u, entropy.v))?;
    let route_gap = (root - x).amax();
    Ok(BassResult {
        optimum,
        system_root: [root[0], root[1]],
        system_iterations,
        route_gap,
    })
}

/// Newton on the Bass system with the analytic Jacobian
/// d/da Φ⁻¹(a) = 1/φ(Φ⁻¹(a)).
fn solve_bass_system(inst: &ThreePointInstance, start: Vector2<f64>) -> Result<(Vector2<f64>, usize)> {
    let dq = |a: f64| 1.0 / normal::pdf(normal::inverse_cdf(a));
    let residual = |x: &Vector2<f64>| {
        let r = bass_system_residual(inst, x[0], x[1]);
        Vector2::new(r[0], r[1])
    };
    let (p1, q1, r1) = (inst.p1, inst.q1, inst.r1);
    let mut x = start;
    for it in 1..=100 {
        let r = residual(&x);
        if r.amax() < 1e-14 {
            return Ok((x, it));
        }
        let w = inst.p2 - x[0] - x[1];
        // dT/dw, with dw/du = dw/dv = −1.
        let dt = (dq(w / r1) + dq(0.5 - w / r1)) / r1;
        let a = (dq(x[0] / p1) + dq(1.5 - x[0] / p1)) / p1;
        let b = (dq(x[1] / q1) + dq(1.0 - x[1] / q1)) / q1;
        let jac = Matrix2::new(a + dt, dt, dt, b + dt);
        let d = -jac
            .lu()
            .solve(&r)
            .ok_or_else(|| Error::Numerical("singular Jacobian of the Bass system".into()))?;
        let mut step = fraction_to_boundary(inst, &x, &d, 0.01);
        let norm0 = r.norm();
        while step > 1e-16 {
            if residual(&(x + d * step)).norm() < norm0 {
                break;
            }
            step *= 0.5;
        }
        x += d * step;
        if (d * step).amax() < 1e-17 {
            return Ok((x, it));
        }
    }
    let res = residual(&x).amax();
    if res < 1e-10 {
        Ok((x, 100))
    } else {
        Err(Error::NotConverged {
            context: "Bass first-order system".into(),
            iterations: 100,
            residual: res,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_row_at_v_zero() {
        let inst = ThreePointInstance::reference();
        // u + v ≥ p₂ − r₁/4 = 0.395 forces u ≥ 0.395 > 3p₁/4, so v = 0 is
        // infeasible here; use an instance where it is admissible.
        assert!(parametrize_coupling(&inst, 0.25, 0.0).is_err());
        let sym = ThreePointInstance::new(0.3, 0.4, 0.2, 0.6).unwrap();
        let m = parametrize_coupling(&sym, 0.2, 0.0).unwrap();
        assert_eq!(m[1], [0.0, 0.4, 0.0]);
    }

    #[test]
    fn names_the_violated_constraint() {
        let inst = ThreePointInstance::reference();
        match parametrize_coupling(&inst, 0.19, 0.2) {
            Err(Error::InfeasibleParameters { constraint, .. }) => assert_eq!(constraint, "u >= p1/2"),
            other => panic!("{other:?}"),
        }
        match parametrize_coupling(&inst, 0.25, 0.24) {
            Err(Error::InfeasibleParameters { constraint, .. }) => assert_eq!(constraint, "v <= q1/2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unequal_means() {
        assert!(matches!(ThreePointInstance::new(0.4, 0.46, 0.43, 0.3), Err(Error::NotInConvexOrder(_))));
        assert!(matches!(ThreePointInstance::new(0.4, 0.7, 0.43, 0.27), Err(Error::Field { .. })));
    }

    #[test]
    fn w2_examples() {
        assert!((w2_to_standard_gaussian(&DiscreteMeasure::dirac(&[0.0])).unwrap() - 1.0).abs() < 1e-15);
        let a = (2.0 / std::f64::consts::PI).sqrt();
        let p = DiscreteMeasure::one_dimensional(&[-a, a], &[0.5, 0.5]).unwrap();
        let w = w2_to_standard_gaussian(&p).unwrap();
        assert!((w - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-15);
        assert!((w - 0.363380).abs() < 1e-6);
    }

    #[test]
    fn chebyshev_center_is_interior() {
        let inst = ThreePointInstance::reference();
        let (u, v, r) = inst.chebyshev_center().unwrap();
        assert!(r > 0.0);
        assert!(inst.violations(u, v).iter().all(|(_, a)| *a <= -r + 1e-12));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn instance(p1: f64, q1: f64, p2: f64) -> Option<ThreePointInstance> {
            let r1 = 1.0 - p1 - q1;
            let q2 = 1.5 * p1 + q1 + 0.5 * r1 - 2.0 * p2;
            let inst = ThreePointInstance::new(p1, q1, p2, q2).ok()?;
            (inst.chebyshev_center().ok()?.2 > 1e-3).then_some(inst)
        }

        fn entropy(inst: &ThreePointInstance, m: &Matrix3x3) -> f64 {
            let (mu, nu) = ([inst.p1, inst.q1, inst.r1], [inst.p2, inst.q2, inst.r2]);
            let mut h = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    if m[i][j] > 0.0 {
                        h += m[i][j] * (m[i][j] / (mu[i] * nu[j])).ln();
                    }
                }
            }
            h
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn polygon_points_are_martingale_couplings(
                p1 in 0.05f64..0.6, q1 in 0.05f64..0.6, p2 in 0.05f64..0.6,
                angle in 0.0f64..std::f64::consts::TAU, frac in 0.0f64..0.99,
            ) {
                let inst = instance(p1, q1, p2);
                prop_assume!(inst.is_some());
                let inst = inst.unwrap();
                let (cu, cv, r) = inst.chebyshev_center().unwrap();
                let (u, v) = (cu + frac * r * angle.cos(), cv + frac * r * angle.sin());
                let m = parametrize_coupling(&inst, u, v).unwrap();
                let mu = [inst.p1, inst.q1, inst.r1];
                let nu = [inst.p2, inst.q2, inst.r2];
                for i in 0..3 {
                    prop_assert!(m[i].iter().all(|p| *p >= -1e-15));
                    prop_assert!((m[i].iter().sum::<f64>() - mu[i]).abs() < 1e-12);
                    let drift: f64 = (0..3).map(|j| m[i][j] * (NU_ATOMS[j] - MU_ATOMS[i])).sum();
                    prop_assert!(drift.abs() < 1e-12);
                }
                for j in 0..3 {
                    prop_assert!(((0..3).map(|i| m[i][j]).sum::<f64>() - nu[j]).abs() < 1e-12);
                }
            }

            #[test]
            fn entropy_optimizer_beats_polygon_points(
                p1 in 0.05f64..0.6, q1 in 0.05f64..0.6, p2 in 0.05f64..0.6,
                angle in 0.0f64..std::f64::consts::TAU, frac in 0.0f64..0.99,
            ) {
                let inst = instance(p1, q1, p2);
                prop_assume!(inst.is_some());
                let inst = inst.unwrap();
                let e = entropy_minimize(&inst).unwrap();
                prop_assert!(inst.contains(e.u, e.v));
                prop_assert!((entropy(&inst, &e.matrix) - e.value).abs() < 1e-12);
                let (cu, cv, r) = inst.chebyshev_center().unwrap();
                let m = parametrize_coupling(&inst, cu + frac * r * angle.cos(), cv + frac * r * angle.sin()).unwrap();
                prop_assert!(e.value <= entropy(&inst, &m) + 1e-12);
            }
        }
    }
}
