//! Independent oracles: dense eigen-solvers, brute-force operator powers, a generic LP, closed forms.

mod common;

use common::*;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpflab_core::fit::fit_exponential;
use rpflab_core::potential::Potential;
use rpflab_core::shift::{Fibered, Metric};
use rpflab_core::transfer::{
    gurevich_pressure, integrate_nu, transfer_power, transfer_power_direct, AtomicMeasure, CylinderFunction,
};
use rpflab_core::transport::{solve_transport, ultrametric_wasserstein, wasserstein};

fn spectral_radius(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, j| m[i][j]).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn random_measure(sys: &Fibered, rng: &mut ChaCha8Rng, depth: usize, atoms: usize) -> AtomicMeasure {
    let ws = sys.words(0, depth).unwrap();
    let pairs = (0..atoms).map(|_| (ws.word(rng.gen_range(0..ws.len())).to_vec(), rng.gen_range(0.05..1.0))).collect();
    AtomicMeasure::from_pairs(0, depth, pairs).unwrap().normalized().unwrap()
}

#[test]
fn log_lambda_matches_perron_root() {
    let m = vec![vec![3.0, 1.0, 0.5], vec![1.0, 2.0, 1.0], vec![0.5, 1.5, 2.5]];
    let sys = full_shift(3);
    let phi = Potential::log_matrix(vec![1, 2, 3], vec![vec![1, 2, 3]], vec![m.clone()], 0.5).unwrap();
    let p = prepared(&phi, &sys, 10, 10);
    let want = spectral_radius(&m).ln();
    for j in -5..=5 {
        assert!((p.triple.log_lambda(j).unwrap() - want).abs() < 1e-10, "fiber {j}");
    }
}

#[test]
fn conformal_measure_of_markov_potential_is_the_chain() {
    let m = Markov::new(0.35, 0.15);
    let sys = full_shift(2);
    let p = prepared(&m.potential(0.5), &sys, 10, 10);
    let nu = p.triple.nu(&sys, 0).unwrap();
    for a in 0..2 {
        assert!((nu.cylinder_mass(&[a as u32 + 1]) - m.pi[a]).abs() < 1e-10);
        for b in 0..2 {
            let want = m.pi[a] * m.p[a][b];
            assert!((nu.cylinder_mass(&[a as u32 + 1, b as u32 + 1]) - want).abs() < 1e-10);
        }
    }
    assert!(p.triple.log_lambda(0).unwrap().abs() < 1e-12);
}

#[test]
fn operator_powers_agree_with_preimage_enumeration() {
    let sys = random_three(21);
    let phi = Potential::tables(2, 0.5, 2, depth_two_tables(3, &[1, 2, 3], 0.3)).unwrap();
    let f = CylinderFunction::from_fn(&sys, 0, 2, |w| (w[0] as f64) * 0.7 - (w[1] as f64).sqrt()).unwrap();
    for n in 1..=6 {
        let a = transfer_power(&phi, &sys, &f, n).unwrap();
        let b = transfer_power_direct(&phi, &sys, &f, n).unwrap();
        let scale = b.sup_norm().max(1.0);
        assert!(a.sup_distance(&sys, &b).unwrap() <= 1e-12 * scale, "n = {n}");
    }
}

#[test]
fn ultrametric_formula_matches_simplex() {
    let sys = random_three(4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for metric in [Metric::raw(0.5).unwrap(), Metric::raw(0.3).unwrap(), Metric::adjusted(0.5, 3.0).unwrap()] {
        for _ in 0..50 {
            let mu = random_measure(&sys, &mut rng, 4, 6);
            let nu = random_measure(&sys, &mut rng, 4, 6);
            let (w, plan) = wasserstein(&sys, &mu, &nu, metric).unwrap();
            let u = ultrametric_wasserstein(&sys, &mu, &nu, metric).unwrap();
            assert!((w - u).abs() < 1e-10, "{w} vs {u}");
            assert!(plan.marginal_error() < 1e-12);
        }
    }
}

/// The same transportation problem handed to a general-purpose LP solver.
fn lp_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let n = demand.len();
    let vars: Vec<_> = cost.iter().map(|&c| p.add_var(c, (0.0, f64::INFINITY))).collect();
    for (i, &a) in supply.iter().enumerate() {
        p.add_constraint((0..n).map(|j| (vars[i * n + j], 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, a);
    }
    for (j, &b) in demand.iter().enumerate() {
        p.add_constraint((0..supply.len()).map(|i| (vars[i * n + j], 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, b);
    }
    p.solve().unwrap().into_solution().unwrap().objective()
}

#[test]
fn transport_simplex_matches_generic_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let (m, n) = (rng.gen_range(1..7), rng.gen_range(1..7));
        let mut supply: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mut demand: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let (s, d): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
        supply.iter_mut().for_each(|x| *x /= s);
        demand.iter_mut().for_each(|x| *x /= d);
        let cost: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let sol = solve_transport(&supply, &demand, &cost).unwrap();
        let want = lp_transport(&supply, &demand, &cost);
        assert!((sol.cost - want).abs() < 1e-9, "{} vs {want}", sol.cost);
        assert!((sol.dual_objective(&supply, &demand) - sol.cost).abs() < 1e-9);
    }
}

#[test]
fn pressure_of_log_matrix_is_log_spectral_radius() {
    let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
    let sys = full_shift(2);
    let phi = Potential::log_matrix(vec![1, 2], vec![vec![1, 2]], vec![m.clone()], 0.5).unwrap();
    let rep = gurevich_pressure(&phi, &sys, 1, 400, None, None).unwrap();
    assert!((rep.estimate - spectral_radius(&m).ln()).abs() < 1e-9);
}

#[test]
fn nu_integral_is_stationary_expectation() {
    let m = Markov::new(0.3, 0.2);
    let sys = full_shift(2);
    let p = prepared(&m.potential(0.5), &sys, 10, 10);
    let f = CylinderFunction::from_fn(&sys, 0, 2, |w| if w == [1, 2] { 1.0 } else { 0.0 }).unwrap();
    let got = integrate_nu(&p.tilde, &sys, &p.triple, &f).unwrap();
    assert!((got - m.pi[0] * m.p[0][1]).abs() < 1e-12);
}

#[test]
fn fit_recovers_exact_exponential() {
    let xs: Vec<f64> = (0..30).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * 0.8f64.powf(*x)).collect();
    let fit = fit_exponential(&xs, &ys, 1e-300).unwrap();
    assert!((fit.rate() - 0.8).abs() < 1e-10);
}
