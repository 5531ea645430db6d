mod common;

use common::*;
use mbridge::dynamics::*;
use mbridge::gaussian::{uniform_grid, weighted_energy_closed_form};
use mbridge::stats::{binned_increment_z_score, frequencies, ks_two_sample, mean_and_standard_error, total_variation};
use mbridge::{sinkhorn_msb, DiscreteMeasure, SolverConfig};
use nalgebra::DMatrix;

fn gaussian_fiber(delta: f64) -> FiberModel {
    FiberModel::gaussian(vec![0.0], DMatrix::from_element(1, 1, delta)).unwrap()
}

fn bernoulli_fiber() -> FiberModel {
    FiberModel::discrete(vec![0.5], m1(&[0.0, 1.0], &[0.5, 0.5])).unwrap()
}

fn terminal_labels(e: &PathEnsemble, atoms: &[f64]) -> Vec<usize> {
    e.paths
        .iter()
        .map(|p| atoms.iter().position(|a| *a == p.terminal[0]).unwrap())
        .collect()
}

#[test]
fn gaussian_mart_energy_is_unbiased_under_stratified_rule() {
    let opts = SimulationOptions::default()
        .with_rule(EnergyRule::StratifiedRandom)
        .recording(vec![0.0, 1.0]);
    let e = simulate_follmer_martingale(&gaussian_fiber(2.0), &uniform_grid(200), 20_000, 5, &opts).unwrap();
    let (mean, se) = e.mart_energy();
    let exact = weighted_energy_closed_form(&DMatrix::from_element(1, 1, 2.0)).unwrap();
    assert!((exact - 0.153426).abs() < 1e-6);
    assert!((mean - exact).abs() < 3.0 * se, "{mean} ± {se} vs {exact}");
    assert!(se < 1e-3);
}

#[test]
fn cost_preservation_for_gaussian_fiber() {
    let opts = SimulationOptions::default()
        .with_rule(EnergyRule::StratifiedRandom)
        .recording(vec![0.0, 0.25, 0.5, 0.9, 1.0]);
    let e = simulate_follmer_martingale(&gaussian_fiber(2.0), &uniform_grid(400), 20_000, 6, &opts).unwrap();
    let check = phi_bijection_check(&e).unwrap();
    assert!(check.discrepancy < 1e-2, "{check:?}");
    assert!(check.max_pathwise_deviation < 1e-12);
    // Both sides equal ½(1 − ln 2) in expectation.
    let target = 0.5 * (1.0 - 2f64.ln());
    assert!((check.cost_drift - target).abs() < 4.0 * check.cost_drift_se + 1e-3);
}

#[test]
fn identity_delta_has_zero_costs() {
    let opts = SimulationOptions::default().recording(vec![0.0, 0.5, 1.0]);
    let f = FiberModel::gaussian(vec![0.2, -0.1], DMatrix::identity(2, 2)).unwrap();
    let e = simulate_follmer_martingale(&f, &uniform_grid(50), 500, 2, &opts).unwrap();
    let c = phi_bijection_check(&e).unwrap();
    assert!(c.cost_drift.abs() < 1e-20 && c.cost_mart.abs() < 1e-20);
    for (p, path) in e.paths.iter().enumerate() {
        assert_eq!(e.martingale_point(p, 2), &path.terminal[..]);
    }
}

#[test]
fn bernoulli_terminal_law() {
    let opts = SimulationOptions::default().recording(vec![0.0, 0.5, 1.0]);
    let e = simulate_follmer_martingale(&bernoulli_fiber(), &uniform_grid(100), 100_000, 8, &opts).unwrap();
    let freq = frequencies(&terminal_labels(&e, &[0.0, 1.0]), 2);
    assert!(total_variation(&freq, &[0.5, 0.5]) < 0.01);
    let mid = e.martingale_column(1, 0);
    assert!(mid.iter().all(|m| *m > 0.0 && *m < 1.0));
}

#[test]
fn discrete_terminal_law_within_sampling_bound() {
    let law = m1(&[-2.0, -0.5, 1.0, 3.0], &[0.1, 0.4, 0.3, 0.2]);
    let x = law.mean()[0];
    let f = FiberModel::discrete(vec![x], law.clone()).unwrap();
    let n = 40_000;
    let opts = SimulationOptions::default().recording(vec![1.0]);
    let e = simulate_follmer_martingale(&f, &uniform_grid(20), n, 12, &opts).unwrap();
    let atoms: Vec<f64> = law.atoms().map(|a| a[0]).collect();
    let freq = frequencies(&terminal_labels(&e, &atoms), 4);
    assert!(total_variation(&freq, law.weights()) < 3.0 * (4.0 / n as f64).sqrt());
}

#[test]
fn gaussian_terminal_moments() {
    let delta = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
    let f = FiberModel::gaussian(vec![1.0, -1.0], delta.clone()).unwrap();
    let n = 40_000;
    let opts = SimulationOptions::default().recording(vec![1.0]);
    let e = simulate_follmer_martingale(&f, &uniform_grid(10), n, 4, &opts).unwrap();
    for c in 0..2 {
        let col = e.martingale_column(0, c);
        let (m, se) = mean_and_standard_error(&col);
        assert!((m - f.start()[c]).abs() < 3.0 * se);
        let sq: Vec<f64> = col.iter().map(|v| (v - f.start()[c]).powi(2)).collect();
        let (v, se) = mean_and_standard_error(&sq);
        assert!((v - delta[(c, c)]).abs() < 3.0 * se, "{v} ± {se}");
    }
    let cross: Vec<f64> = e.paths.iter().map(|p| (p.terminal[0] - 1.0) * (p.terminal[1] + 1.0)).collect();
    let (v, se) = mean_and_standard_error(&cross);
    assert!((v - 0.6).abs() < 3.0 * se);
}

#[test]
fn martingale_increments_have_zero_conditional_mean() {
    let law = m1(&[-1.0, 0.0, 2.0], &[0.3, 0.5, 0.2]);
    let x = law.mean()[0];
    let f = FiberModel::discrete(vec![x], law).unwrap();
    let times = vec![0.0, 0.2, 0.5, 0.8, 1.0];
    let opts = SimulationOptions::default().recording(times.clone());
    let e = simulate_follmer_martingale(&f, &uniform_grid(100), 50_000, 21, &opts).unwrap();
    for a in 1..times.len() {
        for b in a + 1..times.len() {
            let z = binned_increment_z_score(&e.martingale_column(a, 0), &e.martingale_column(b, 0), 5);
            assert!(z < 3.5, "times {} → {}: z = {z}", times[a], times[b]);
        }
    }
}

#[test]
fn discrete_mart_energy_diverges_under_refinement() {
    // Geometric grids t_k = 1 − 2^{−k} resolve the blow-up near t = 1.
    let f = bernoulli_fiber();
    let mut previous = 0.0;
    for levels in [4usize, 8, 12, 16] {
        let mut grid: Vec<f64> = (0..=levels).map(|k| 1.0 - 0.5f64.powi(k as i32)).collect();
        grid.push(1.0);
        let opts = SimulationOptions::default().recording(vec![0.0, 1.0]);
        let e = simulate_follmer_martingale(&f, &grid, 4000, 3, &opts).unwrap();
        let (mart, _) = e.mart_energy();
        assert!(mart > previous, "{levels}: {mart} after {previous}");
        previous = mart;
    }
    assert!(previous > 1.0);
    // Drift energy on a fixed horizon [0, 1/2] stays put as the grid refines.
    let horizon = |n: usize| {
        let opts = SimulationOptions {
            energy_clip: 0.5 - 1e-12,
            ..SimulationOptions::default().recording(vec![0.0])
        };
        let e = simulate_follmer_martingale(&f, &uniform_grid(n), 20_000, 4, &opts).unwrap();
        e.drift_energy()
    };
    let (a, sa) = horizon(20);
    let (b, sb) = horizon(160);
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() < 4.0 * (sa + sb) + 0.02, "{a} vs {b}");
}

#[test]
fn euler_scheme_agrees_in_law() {
    let law = m1(&[-1.0, 0.5, 2.0], &[0.3, 0.4, 0.3]);
    let x = law.mean()[0];
    let f = FiberModel::discrete(vec![x], law).unwrap();
    let grid = uniform_grid(1000);
    let times = [0.5, 0.8];
    let exact = simulate_follmer_martingale(&f, &grid, 20_000, 30, &SimulationOptions::default().recording(times.to_vec()))
        .unwrap();
    let euler = simulate_follmer_euler(&f, &grid, 20_000, 31, Some(&times)).unwrap();
    for slot in 0..2 {
        let ks = ks_two_sample(&exact.drifted_column(slot, 0), &euler.column(slot, 0));
        assert!(ks < 0.025, "t = {}: KS {ks}", times[slot]);
    }
}

#[test]
fn randomized_ensemble_reproduces_solver_coupling() {
    let (mu, nu) = family_pair();
    let r = sinkhorn_msb(&mu, &nu, &SolverConfig::default()).unwrap();
    let fibers = fibers_from_coupling(&r.coupling).unwrap();
    let n = 100_000;
    let opts = SimulationOptions::default().recording(vec![0.0, 1.0]);
    let e = randomize_over_mu(&mu, &fibers, &nu, &uniform_grid(50), n, 17, &opts).unwrap();
    let mut joint = vec![0.0; mu.len() * nu.len()];
    for p in 0..e.paths.len() {
        let i = mu.find_atom(e.martingale_point(p, 0), 1e-9).unwrap();
        let j = nu.find_atom(e.martingale_point(p, 1), 0.0).unwrap();
        joint[i * nu.len() + j] += 1.0 / n as f64;
    }
    assert!(total_variation(&joint, r.coupling.weights()) < 0.015);

    let per = e.fiber_energies();
    let (d, m) = e.aggregated_energy();
    assert_eq!(d, 0.5 * per[0].0 + 0.5 * per[1].0);
    assert_eq!(m, 0.5 * per[0].1 + 0.5 * per[1].1);
}

#[test]
fn single_atom_randomization_matches_direct_simulation() {
    let law = m1(&[-1.0, 1.0], &[0.5, 0.5]);
    let f = FiberModel::discrete(vec![0.0], law.clone()).unwrap();
    let opts = SimulationOptions::default();
    let grid = uniform_grid(16);
    let a = simulate_follmer_martingale(&f, &grid, 300, 77, &opts).unwrap();
    let b = randomize_over_mu(&DiscreteMeasure::dirac(&[0.0]), &[f], &law, &grid, 300, 77, &opts).unwrap();
    assert_eq!(a.paths, b.paths);
}

#[test]
fn randomization_rejects_mismatched_mixture() {
    let (mu, nu) = family_pair();
    let r = sinkhorn_msb(&mu, &nu, &SolverConfig::default()).unwrap();
    let fibers = fibers_from_coupling(&r.coupling).unwrap();
    let wrong = m1(&[-2.0, 0.0, 2.0], &[0.25, 0.5, 0.25]);
    let res = randomize_over_mu(&mu, &fibers, &wrong, &uniform_grid(4), 10, 0, &SimulationOptions::default());
    assert!(matches!(res, Err(mbridge::Error::InvalidMeasure(_))));
}
