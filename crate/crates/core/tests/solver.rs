mod common;

use common::*;
use mbridge::measures::{gaussian_reference_identity_check, Coupling};
use mbridge::rng::substream;
use mbridge::solver::*;
use mbridge::{check_convex_order, DiscreteMeasure};

fn solve(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> SolveReport {
    let r = sinkhorn_msb(mu, nu, &SolverConfig::default()).unwrap();
    assert!(r.converged, "not converged after {} iterations", r.iterations);
    r
}

#[test]
fn reproduces_published_entropy_optimizer() {
    let r = solve(&paper_mu(), &paper_nu());
    for i in 0..3 {
        for j in 0..3 {
            let got = r.coupling.get(i, j);
            let want = PAPER_ENTROPY_OPTIMIZER[i][j];
            assert!((got - want).abs() < 5e-5, "({i},{j}): {got} vs {want}");
        }
    }
    assert!(r.marginal_residual < 1e-10 && r.martingale_residual < 1e-10);
}

#[test]
fn primal_value_formulas_agree_on_published_matrix() {
    // Entries of the published matrix are rounded; rebuild the exact coupling
    // from its (u, v) coordinates so that the marginals are exact.
    let (u, v) = (PAPER_ENTROPY_OPTIMIZER[0][0], PAPER_ENTROPY_OPTIMIZER[1][0]);
    let (p1, q1, r1, p2) = (0.40, 0.46, 0.14, 0.43);
    let w = p2 - u - v;
    let rows = vec![
        vec![u, 1.5 * p1 - 2.0 * u, u - 0.5 * p1],
        vec![v, q1 - 2.0 * v, v],
        vec![w, 0.5 * r1 - 2.0 * w, w + 0.5 * r1],
    ];
    let m = Coupling::from_rows(paper_mu(), paper_nu(), &rows).unwrap();
    assert!(m.marginal_residual() < 1e-15);
    let joint = primal_value(&m).unwrap();
    let solved = solve(&paper_mu(), &paper_nu()).primal_value;
    assert!((joint - solved).abs() < 1e-6);
}

#[test]
fn primal_value_of_product_is_zero() {
    let mu = m1(&[0.0], &[1.0]);
    let nu = m1(&[-1.0, 1.0], &[0.5, 0.5]);
    assert_eq!(primal_value(&Coupling::product(&mu, &nu)).unwrap(), 0.0);
}

#[test]
fn value_chain_on_family_pair() {
    let (mu, nu) = family_pair();
    let r = solve(&mu, &nu);
    assert!((r.primal_value - r.dual_value).abs() < 1e-8);
    let d = dual_value(&r.potentials.psi, &mu, &nu, &SolverConfig::default()).unwrap();
    assert!((d - r.primal_value).abs() < 1e-8);
    let base = extract_base_measure(&r, &mu).unwrap();
    assert_eq!(base.len(), 2);
    let vp = vp_value(&base, &mu, &nu).unwrap();
    assert!((vp - r.primal_value).abs() < 1e-7, "{vp} vs {}", r.primal_value);
}

#[test]
fn dual_value_invariant_under_affine_shift() {
    let (mu, nu) = family_pair();
    let r = solve(&mu, &nu);
    let cfg = SolverConfig::default();
    let d0 = dual_value(&r.potentials.psi, &mu, &nu, &cfg).unwrap();
    let shifted: Vec<f64> = r
        .potentials
        .psi
        .iter()
        .zip(nu.atoms())
        .map(|(p, y)| p + 0.7 - 1.3 * y[0])
        .collect();
    let d1 = dual_value(&shifted, &mu, &nu, &cfg).unwrap();
    assert!((d0 - d1).abs() < 1e-10);
}

#[test]
fn weak_duality_for_arbitrary_potentials() {
    let mut rng = substream(7, 0);
    use rand::Rng;
    let mu = paper_mu();
    let nu = paper_nu();
    let witness = check_convex_order(&mu, &nu).unwrap().witness.unwrap();
    let feasible = primal_value(&witness).unwrap();
    let optimum = solve(&mu, &nu).primal_value;
    for _ in 0..20 {
        let psi: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d = dual_value(&psi, &mu, &nu, &SolverConfig::default()).unwrap();
        assert!(d <= optimum + 1e-12);
        assert!(d <= feasible + 1e-12);
    }
}

#[test]
fn vp_is_maximised_at_base_measure() {
    let (mu, nu) = family_pair();
    let r = solve(&mu, &nu);
    let base = extract_base_measure(&r, &mu).unwrap();
    let h: Vec<f64> = base.atoms().map(|a| a[0]).collect();
    for da in [-0.3, -0.1, -0.01, 0.0, 0.01, 0.1, 0.3] {
        for db in [-0.2, -0.02, 0.0, 0.05, 0.2] {
            let perturbed = DiscreteMeasure::one_dimensional(&[h[0] + da, h[1] + db], base.weights()).unwrap();
            let vp = vp_value(&perturbed, &mu, &nu).unwrap();
            assert!(vp <= r.primal_value + 1e-9, "({da},{db}): {vp} > {}", r.primal_value);
        }
    }
    for w in [0.3, 0.45, 0.7] {
        let reweighted = DiscreteMeasure::one_dimensional(&h, &[w, 1.0 - w]).unwrap();
        assert!(vp_value(&reweighted, &mu, &nu).unwrap() <= r.primal_value + 1e-9);
    }
}

#[test]
fn base_measure_reproduces_conditionals() {
    for (mu, nu) in [family_pair(), (paper_mu(), paper_nu())] {
        let r = solve(&mu, &nu);
        let base = extract_base_measure(&r, &mu).unwrap();
        let sp = classical_sinkhorn_sp(&base, &nu).unwrap();
        let (ss1, ss2) = sp.system_residuals();
        assert!(ss1 < 1e-10 && ss2 < 1e-10);
        for i in 0..mu.len() {
            let k = base.find_atom(&r.potentials.h[i], 1e-12).unwrap();
            for (a, b) in sp.conditional(k).iter().zip(r.coupling.conditional(i)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn golden_section_oracle_on_family() {
    let (mu, nu) = family_pair();
    let r = solve(&mu, &nu);
    let product: Vec<f64> = Coupling::product(&mu, &nu).weights().to_vec();
    let entropy = |a: f64| {
        family_coupling(a)
            .iter()
            .zip(&product)
            .map(|(m, p)| if *m > 0.0 { m * (m / p).ln() } else { 0.0 })
            .sum::<f64>()
    };
    let a = golden_section(entropy, 0.25, 0.3);
    for (x, y) in family_coupling(a).iter().zip(r.coupling.weights()) {
        assert!((x - y).abs() < 1e-7, "{x} vs {y}");
    }
}

#[test]
fn translation_leaves_coupling_unchanged() {
    let mut rng = substream(11, 0);
    for dim in [1, 2] {
        let (mu, nu) = random_instance(&mut rng, dim);
        let shift: Vec<f64> = (0..dim).map(|c| 1.5 - c as f64 * 2.75).collect();
        let a = solve(&mu, &nu);
        let b = solve(&mu.translated(&shift), &nu.translated(&shift));
        for (x, y) in a.coupling.weights().iter().zip(b.coupling.weights()) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn dual_ascent_is_monotone() {
    let mut rng = substream(13, 0);
    for dim in [1, 1, 2, 2] {
        let (mu, nu) = random_instance(&mut rng, dim);
        let r = solve(&mu, &nu);
        for w in r.dual_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn random_instances_certify_value_chain() {
    let mut rng = substream(2024, 0);
    for t in 0..10 {
        let dim = 1 + t % 2;
        let (mu, nu) = random_instance(&mut rng, dim);
        let r = solve(&mu, &nu);
        assert!(gibbs_residual(&r) < 1e-12);
        assert!((r.primal_value - r.dual_value).abs() < 1e-8);
        let base = extract_base_measure(&r, &mu).unwrap();
        let vp = vp_value(&base, &mu, &nu).unwrap();
        assert!((vp - r.primal_value).abs() < 1e-7, "instance {t}: {vp} vs {}", r.primal_value);
        let id = gaussian_reference_identity_check(&r.coupling, &nu).unwrap();
        assert!(id.residual < 1e-10, "instance {t}: {}", id.residual);
    }
}

#[test]
fn gaussian_discretisation_base_measure_is_near_identity() {
    // μ ≈ N(0,1) on a grid, ν = μ * (discretised N(0,1)), so Δ ≈ 1 and h(x) ≈ x.
    let step = 0.5;
    let grid: Vec<f64> = (-8..=8).map(|i| i as f64 * step).collect();
    let gauss: Vec<f64> = grid.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let z: f64 = gauss.iter().sum();
    let w: Vec<f64> = gauss.iter().map(|g| g / z).collect();
    let mu = m1(&grid, &w);
    let nu_atoms: Vec<f64> = (-16..=16).map(|i| i as f64 * step).collect();
    let mut nu_w = vec![0.0; nu_atoms.len()];
    for (a, wa) in w.iter().enumerate() {
        for (b, wb) in w.iter().enumerate() {
            nu_w[a + b] += wa * wb;
        }
    }
    let nu = m1(&nu_atoms, &nu_w);
    let r = solve(&mu, &nu);
    for (i, x) in grid.iter().enumerate() {
        if x.abs() <= 2.0 {
            let h = r.potentials.h[i][0];
            assert!((h - x).abs() < 0.05, "x = {x}: h = {h}");
        }
    }
}

mod properties {
    use super::*;
    use proptest::collection::vec;
    use proptest::prelude::*;
    use proptest::sample::subsequence;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn solution_is_a_martingale_coupling(
            grid in subsequence((-6..=6).collect::<Vec<i32>>(), 3..6),
            raw in vec(0.2f64..1.0, 1..5),
            kernels in vec(vec(0.05f64..1.0, 5), 4),
        ) {
            let atoms: Vec<Vec<f64>> = grid.iter().map(|&a| vec![0.5 * a as f64]).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let kernels: Vec<Vec<f64>> = kernels[..weights.len()].iter().map(|k| k[..atoms.len()].to_vec()).collect();
            let (mu, nu) = feasible_instance_from_kernels(atoms, &weights, &kernels).unwrap();
            let r = sinkhorn_msb(&mu, &nu, &SolverConfig::default()).unwrap();
            prop_assert!(r.converged);
            prop_assert!(r.coupling.weights().iter().all(|&w| w >= 0.0));
            prop_assert!(r.marginal_residual < 1e-9);
            prop_assert!(r.martingale_residual < 1e-9);
            prop_assert!(r.primal_value >= -1e-12);
            prop_assert!((r.primal_value - r.dual_value).abs() < 1e-8);
            // Weak duality along the iteration: every dual iterate sits below the optimum.
            prop_assert!(r.dual_history.iter().all(|d| *d <= r.primal_value + 1e-8));
        }
    }
}
