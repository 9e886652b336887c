mod common;

use common::*;
use rpflab_core::potential::Potential;
use rpflab_core::transfer::Observable;
use rpflab_core::transport::{verify_decay, verify_main_lemma, DecayOptions, LemmaOptions};

#[test]
fn full_shift_pipeline() {
    let sys = full_shift(2);
    let phi = Potential::constant(0.0, 0.5).unwrap();
    let p = prepared(&phi, &sys, 20, 20);
    assert!((p.triple.log_lambda(0).unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(!p.cert.sequences.l.is_empty());
    let lemma = verify_main_lemma(&p.tilde, &sys, &p.cert, &LemmaOptions::default()).unwrap();
    assert!(lemma.passed(), "{:?}", lemma.violations);
    let opts = DecayOptions { observable: Observable::letter(1), horizon: 20, floor: 1e-13 };
    let decay = verify_decay(&p.tilde, &sys, &p.triple, &p.cert, &opts).unwrap();
    assert!(decay.passed(), "{:?}", decay.violations);
}

#[test]
fn golden_random_pipeline() {
    let sys = golden_random(3);
    let phi = Potential::tables(2, 0.5, 2, depth_two_tables(2, &[1, 2], 0.4)).unwrap();
    let p = prepared(&phi, &sys, 30, 30);
    eprintln!("t = {} t_obs = {} l = {:?} k = {:?}", p.cert.t, p.cert.t_observed, p.cert.sequences.l, p.cert.sequences.k);
    let lemma = verify_main_lemma(&p.tilde, &sys, &p.cert, &LemmaOptions::default()).unwrap();
    assert!(lemma.passed(), "{:?}", lemma.violations);
    let opts = DecayOptions { observable: Observable::letter(1), horizon: 30, floor: 1e-13 };
    let decay = verify_decay(&p.tilde, &sys, &p.triple, &p.cert, &opts).unwrap();
    assert!(decay.passed(), "{:?}", decay.violations);
}

#[test]
fn random_three_pipeline() {
    let sys = random_three(5);
    let phi = Potential::tables(2, 0.5, 2, depth_two_tables(3, &[1, 2, 3], 0.3)).unwrap();
    let p = prepared(&phi, &sys, 30, 30);
    eprintln!("t = {} t_obs = {} l = {:?} k = {:?}", p.cert.t, p.cert.t_observed, p.cert.sequences.l, p.cert.sequences.k);
    let lemma = verify_main_lemma(&p.tilde, &sys, &p.cert, &LemmaOptions::default()).unwrap();
    assert!(lemma.passed(), "{:?}", lemma.violations);
}

#[test]
fn markov_apps() {
    use rpflab_core::apps::*;
    let m = Markov::new(0.3, 0.2);
    let sys = full_shift(2);
    let phi = m.potential(0.5);
    let p = prepared(&phi, &sys, 40, 40);
    let mix = psi_mixing(&p.tilde, &sys, &p.triple, &p.cert, &MixingOptions { depth: 3, horizon: 20 }).unwrap();
    eprintln!("psi {:?}\nviol {:?} X {} direct {}", &mix.psi[..5], mix.violations, mix.derived_constant, mix.direct_constant);
    // closed form: max_{i,j} P^{n+1}_{ij}/π_j − 1
    for n in 1..=20 {
        let pn = m.power(n + 1);
        let want = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| pn[i][j] / m.pi[j] - 1.0).fold(f64::MIN, f64::max);
        assert!((mix.psi[n - 1] - want).abs() < 1e-10, "n={n} {} vs {want}", mix.psi[n - 1]);
    }
    let opts = CorrelationOptions { f: rpflab_core::transfer::Observable::letter(1), g: rpflab_core::transfer::Observable::letter(1), horizon: 20, direct_lags: 6 };
    let c = correlation_decay(&p.tilde, &sys, &p.triple, &p.cert, &opts).unwrap();
    for n in 0..=20 {
        let want = m.pi[0] * (1.0 - m.pi[0]) * m.lambda2().powi(n as i32);
        assert!((c.curve[n] - want).abs() < 1e-10, "n={n} {} vs {want}", c.curve[n]);
    }
    eprintln!("corr viol {:?} env {}", c.violations, c.envelopes_hold);
    let e = equilibrium_gap(&phi, &p.tilde, &sys, &p.triple, &EquilibriumOptions::default()).unwrap();
    eprintln!("eq {:?}", e);
    assert!((e.entropy - m.entropy_rate()).abs() < 1e-9);
    assert!(e.gap < 1e-2);
}
