mod common;

use common::*;
use mbridge::measures::Coupling;
use mbridge::normal;
use mbridge::rng::substream;
use mbridge::threepoint::*;
use mbridge::{primal_value, sinkhorn_msb, DiscreteMeasure, SolverConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn max_entry_gap(a: &Matrix3x3, b: &[[f64; 3]; 3]) -> f64 {
    (0..9).map(|k| (a[k / 3][k % 3] - b[k / 3][k % 3]).abs()).fold(0.0, f64::max)
}

#[test]
fn entropy_optimizer_matches_published_matrix() {
    let inst = ThreePointInstance::reference();
    let e = entropy_minimize(&inst).unwrap();
    assert!(max_entry_gap(&e.matrix, &PAPER_ENTROPY_OPTIMIZER) < 5e-5);
    assert!(e.residual.iter().all(|r| r.abs() < 1e-10), "{:?}", e.residual);
    assert!(e.boundary_entries.is_empty());
}

#[test]
fn entropy_optimizer_agrees_with_msb_solver() {
    let inst = ThreePointInstance::reference();
    let e = entropy_minimize(&inst).unwrap();
    let r = sinkhorn_msb(&inst.mu(), &inst.nu(), &SolverConfig::default()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((e.matrix[i][j] - r.coupling.get(i, j)).abs() < 1e-7);
        }
    }
    assert!((e.value - r.primal_value).abs() < 1e-9, "{} vs {}", e.value, r.primal_value);
}

#[test]
fn bass_optimizer_matches_published_matrix_and_gap() {
    let inst = ThreePointInstance::reference();
    let e = entropy_minimize(&inst).unwrap();
    let b = bass_minimize(&inst).unwrap();
    assert!(max_entry_gap(&b.optimum.matrix, &PAPER_BASS_OPTIMIZER) < 5e-5);
    assert!(b.optimum.residual.iter().all(|r| r.abs() < 1e-8), "{:?}", b.optimum.residual);
    assert!(b.route_gap < 1e-8, "{}", b.route_gap);
    let (du, dv) = (e.u - b.optimum.u, e.v - b.optimum.v);
    assert!((du / -1.06e-3 - 1.0).abs() < 0.05, "{du}");
    assert!((dv / 1.43e-3 - 1.0).abs() < 0.05, "{dv}");
    assert!(max_entry_gap(&e.matrix, &b.optimum.matrix) > 1e-3);
}

#[test]
fn each_system_fails_at_the_other_optimizer() {
    let inst = ThreePointInstance::reference();
    let e = entropy_minimize(&inst).unwrap();
    let b = bass_minimize(&inst).unwrap();
    let bass_at_e = bass_system_residual(&inst, e.u, e.v);
    let entropy_at_b = entropy_system_residual(&inst, b.optimum.u, b.optimum.v);
    assert!(bass_at_e.iter().fold(0.0f64, |m, r| m.max(r.abs())) > 1e-4, "{bass_at_e:?}");
    // The polynomial system is in absolute units where each side is only
    // about 1e-4 here; compare against the size of its terms.
    let w = inst.p2 - b.optimum.u - b.optimum.v;
    let term = b.optimum.v.powi(2) * (inst.r1 - 4.0 * w).powi(2);
    assert!(entropy_at_b[1].abs() > 1e-5, "{entropy_at_b:?}");
    assert!(entropy_at_b[1].abs() / term > 0.1, "{entropy_at_b:?}");
}

#[test]
fn both_optimizers_mirror_the_outer_rows() {
    // Row −1 conditional is the reflection of row 1: u/p₁ = w/r₁ + 1/2.
    let inst = ThreePointInstance::reference();
    let e = entropy_minimize(&inst).unwrap();
    let b = bass_minimize(&inst).unwrap().optimum;
    for o in [e, b] {
        assert!((o.u / inst.p1 - o.w / inst.r1 - 0.5).abs() < 1e-10);
    }
}

#[test]
fn bass_objective_is_minimal_at_optimizer() {
    let inst = ThreePointInstance::reference();
    let b = bass_minimize(&inst).unwrap().optimum;
    for (du, dv) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3), (5e-4, -5e-4)] {
        assert!(bass_objective(&inst, b.u + du, b.v + dv).unwrap() > b.value);
    }
}

#[test]
fn reflection_symmetric_instance() {
    // p₁ = r₁ and p₂ = r₂; the reflection (x, y) → (−x, −y) maps u to w + r₁/2.
    let inst = ThreePointInstance::new(0.3, 0.4, 0.35, 0.3).unwrap();
    for opt in [entropy_minimize(&inst).unwrap(), bass_minimize(&inst).unwrap().optimum] {
        assert!((opt.u - (opt.w + inst.r1 / 2.0)).abs() < 1e-10, "{opt:?}");
        for i in 0..3 {
            for j in 0..3 {
                assert!((opt.matrix[i][j] - opt.matrix[2 - i][2 - j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn parametrization_is_exact_in_integer_arithmetic() {
    // Weights k/N with even numerators keep every entry of π(u, v) an integer
    // multiple of 1/N.
    let n = 1000i64;
    let (p1, q1, p2) = (400i64, 460i64, 430i64);
    let r1 = n - p1 - q1;
    let q2 = 3 * p1 / 2 + q1 + r1 / 2 - 2 * p2;
    let r2 = n - p2 - q2;
    for (u, v) in [(250i64, 160i64), (230, 170), (280, 140)] {
        let w = p2 - u - v;
        let m = [
            [u, 3 * p1 / 2 - 2 * u, u - p1 / 2],
            [v, q1 - 2 * v, v],
            [w, r1 / 2 - 2 * w, w + r1 / 2],
        ];
        assert!(m.iter().flatten().all(|e| *e >= 0));
        let rows = [p1, q1, r1];
        let cols = [p2, q2, r2];
        for i in 0..3 {
            assert_eq!(m[i].iter().sum::<i64>(), rows[i]);
            // Σ_j π_ij y_j = x_i Σ_j π_ij with y = (−2, 0, 2), x = (−1, 0, 1).
            assert_eq!(2 * (m[i][2] - m[i][0]), (i as i64 - 1) * rows[i]);
        }
        for j in 0..3 {
            assert_eq!(m[0][j] + m[1][j] + m[2][j], cols[j]);
        }
        let inst = ThreePointInstance::new(0.4, 0.46, 0.43, 0.27).unwrap();
        let f = parametrize_coupling(&inst, u as f64 / n as f64, v as f64 / n as f64).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((f[i][j] - m[i][j] as f64 / n as f64).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn returned_matrices_are_martingale_couplings() {
    let inst = ThreePointInstance::reference();
    for m in [entropy_minimize(&inst).unwrap().matrix, bass_minimize(&inst).unwrap().optimum.matrix] {
        let c: Coupling = to_coupling(&inst, &m).unwrap();
        assert!(c.marginal_residual() < 1e-12);
        assert!(c.martingale_residual() < 1e-12);
        assert!(primal_value(&c).is_ok());
    }
}

#[test]
fn w2_matches_monte_carlo_quantile_integral() {
    let a = (2.0 / std::f64::consts::PI).sqrt();
    let p = m1(&[-a, a], &[0.5, 0.5]);
    let closed = w2_to_standard_gaussian(&p).unwrap();
    // Quantile coupling: G ↦ F_p⁻¹(Φ(G)).
    let mut rng = substream(99, 0);
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let g: f64 = rng.sample(StandardNormal);
        let y = if g < 0.0 { -a } else { a };
        acc += (g - y).powi(2);
    }
    let mc = acc / n as f64;
    assert!((mc - closed).abs() < 5e-3, "{mc} vs {closed}");
}

#[test]
fn w2_translation_identity() {
    // W₂²(p + c, γ) = W₂²(p, γ) + c² + 2c(mean(p) − E G) with E G = 0.
    let p = m1(&[-1.5, 0.2, 2.0], &[0.2, 0.5, 0.3]);
    let base = w2_to_standard_gaussian(&p).unwrap();
    for c in [-0.7, 0.3, 1.9] {
        let shifted = w2_to_standard_gaussian(&p.translated(&[c])).unwrap();
        assert!((shifted - (base + c * c + 2.0 * c * p.mean()[0])).abs() < 1e-13);
    }
}

#[test]
fn w2_against_numerical_quantile_integral() {
    let p = m1(&[-2.0, 0.0, 2.0], &[0.43, 0.27, 0.30]);
    let closed = w2_to_standard_gaussian(&p).unwrap();
    // ∫₀¹ (F_p⁻¹(s) − Φ⁻¹(s))² ds by midpoint rule over each atom's interval.
    let mut total = 0.0;
    let mut lo = 0.0;
    for (y, w) in p.iter() {
        let n = 200_000;
        let h = w / n as f64;
        for k in 0..n {
            let s = lo + (k as f64 + 0.5) * h;
            total += (y[0] - normal::inverse_cdf(s)).powi(2) * h;
        }
        lo += w;
    }
    assert!((total - closed).abs() < 1e-4, "{total} vs {closed}");
}

#[test]
fn random_feasible_instances_satisfy_both_systems() {
    let mut rng = substream(5, 0);
    let mut done = 0;
    while done < 10 {
        let p1: f64 = rng.random_range(0.1..0.5);
        let q1: f64 = rng.random_range(0.1..0.6);
        let p2: f64 = rng.random_range(0.1..0.6);
        let r1 = 1.0 - p1 - q1;
        let q2 = 1.5 * p1 + q1 + 0.5 * r1 - 2.0 * p2;
        let Ok(inst) = ThreePointInstance::new(p1, q1, p2, q2) else { continue };
        let Ok((_, _, radius)) = inst.chebyshev_center() else { continue };
        if radius < 0.02 {
            continue;
        }
        let e = entropy_minimize(&inst).unwrap();
        assert!(e.residual.iter().all(|r| r.abs() < 1e-10));
        let b = bass_minimize(&inst).unwrap();
        assert!(b.route_gap < 1e-8, "{inst:?}: {}", b.route_gap);
        let _ = DiscreteMeasure::dirac(&[0.0]);
        done += 1;
    }
}
