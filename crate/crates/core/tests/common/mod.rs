#![allow(dead_code)]

use mbridge::solver::feasible_instance_from_kernels;
use mbridge::DiscreteMeasure;
use rand::Rng;

pub fn m1(atoms: &[f64], weights: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::one_dimensional(atoms, weights).unwrap()
}

pub fn paper_mu() -> DiscreteMeasure {
    m1(&[-1.0, 0.0, 1.0], &[0.40, 0.46, 0.14])
}

pub fn paper_nu() -> DiscreteMeasure {
    m1(&[-2.0, 0.0, 2.0], &[0.43, 0.27, 0.30])
}

pub const PAPER_ENTROPY_OPTIMIZER: [[f64; 3]; 3] = [
    [0.25123, 0.09755, 0.05123],
    [0.16085, 0.13831, 0.16085],
    [0.01793, 0.03414, 0.08793],
];

pub const PAPER_BASS_OPTIMIZER: [[f64; 3]; 3] = [
    [0.25229, 0.09543, 0.05229],
    [0.15941, 0.14117, 0.15941],
    [0.01830, 0.03340, 0.08830],
];

/// μ = ½δ₋₁ + ½δ₁ and ν = (0.3, 0.4, 0.3) on (−2, 0, 2).
pub fn family_pair() -> (DiscreteMeasure, DiscreteMeasure) {
    (m1(&[-1.0, 1.0], &[0.5, 0.5]), m1(&[-2.0, 0.0, 2.0], &[0.3, 0.4, 0.3]))
}

/// The martingale couplings of the family pair, indexed by a ∈ [1/4, 3/10].
pub fn family_coupling(a: f64) -> [f64; 6] {
    let a2 = 0.3 - a;
    [a, 0.75 - 2.0 * a, a - 0.25, a2, 0.25 - 2.0 * a2, a2 + 0.25]
}

/// Random pair in convex order: ν on random atoms, μ the barycenters of
/// full-support kernels, so every μ-atom is strictly interior.
pub fn random_instance(rng: &mut impl Rng, dim: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let k = rng.random_range(3..=6);
    let n = rng.random_range(1..=6);
    let atoms: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let kernels: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(0.05..1.0)).collect())
        .collect();
    feasible_instance_from_kernels(atoms, &weights, &kernels).unwrap()
}

pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - r * (b - a), a + r * (b - a));
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..300 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.5 * (a + b)
}
