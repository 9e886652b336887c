//! Acceptance criteria, one PASS/FAIL line each. Run with `--nocapture` to see the lines.

mod common;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpflab_core::apps::*;
use rpflab_core::config::ExperimentConfig;
use rpflab_core::driver::DriverSystem;
use rpflab_core::potential::Potential;
use rpflab_core::shift::{FiberStructure, Fibered, Metric};
use rpflab_core::transfer::{gibbs_check, gurevich_pressure, AtomicMeasure, GibbsOptions, Observable};
use rpflab_core::transport::{lipschitz_dual, verify_main_lemma, wasserstein, LemmaOptions};

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: usize, name: &'static str, pass: bool, detail: String) -> Verdict {
    let v = Verdict { id, name, pass, detail };
    println!("{} [{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
    v
}

fn configs() -> Vec<(String, ExperimentConfig)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), ExperimentConfig::from_path(&p).unwrap()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// 1. primal − dual ≤ 1e-8 on 200 random pairs with ≤ 8 atoms, under 10 s.
fn duality() -> Verdict {
    let start = Instant::now();
    let sys = full_shift(3);
    let metric = Metric::raw(0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ws = sys.words(0, 4).unwrap();
    let mut worst = 0.0f64;
    let random = |rng: &mut ChaCha8Rng| {
        let k = rng.gen_range(1..=8);
        let pairs = (0..k).map(|_| (ws.word(rng.gen_range(0..ws.len())).to_vec(), rng.gen_range(0.01..1.0))).collect();
        AtomicMeasure::from_pairs(0, 4, pairs).unwrap().normalized().unwrap()
    };
    for _ in 0..200 {
        let (mu, nu) = (random(&mut rng), random(&mut rng));
        let (w, _) = wasserstein(&sys, &mu, &nu, metric).unwrap();
        let (d, _) = lipschitz_dual(&sys, &mu, &nu, metric).unwrap();
        worst = worst.max(w - d);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(1, "strong duality", worst <= 1e-8 && secs < 10.0, format!("max primal − dual = {worst:.2e} (tol 1e-8), {secs:.2}s (limit 10s)"))
}

/// 2. block ratios on three families, 100 trials each, under 2 minutes.
fn main_lemma() -> Verdict {
    let start = Instant::now();
    let families: Vec<(&str, Fibered, Potential)> = vec![
        ("full shift", full_shift(2), Potential::tables(2, 0.5, 2, depth_two_tables(1, &[1, 2], 0.5)).unwrap()),
        ("golden mean", golden_random(2), Potential::tables(2, 0.5, 2, depth_two_tables(2, &[1, 2], 0.4)).unwrap()),
        ("random 3-letter", random_three(4), Potential::tables(2, 0.5, 2, depth_two_tables(3, &[1, 2, 3], 0.3)).unwrap()),
    ];
    let mut worst_unit = 0.0f64;
    let mut worst_t = f64::NEG_INFINITY;
    let mut trials = Vec::new();
    let mut violations = 0;
    for (_, sys, phi) in &families {
        let p = prepared(phi, sys, 20, 20);
        let opts = LemmaOptions { fibers: (0..10).collect(), functions: 10, measures: 10, seed: 3, ..LemmaOptions::default() };
        let rep = verify_main_lemma(&p.tilde, sys, &p.cert, &opts).unwrap();
        violations += rep.violations.len();
        for row in &rep.rows {
            worst_unit = worst_unit.max(row.ratio_settle).max(row.w_ratio_settle);
            worst_t = worst_t.max(row.ratio_block - row.t).max(row.w_ratio_block - row.t);
        }
        trials.push(rep.rows.len() * (opts.functions + opts.measures));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_unit <= 1.0 + 1e-12 && worst_t <= 1e-12 && violations == 0 && secs < 120.0;
    verdict(
        2,
        "contraction blocks",
        pass,
        format!("trials {trials:?}; max settling ratio {worst_unit:.6} (≤ 1 + 1e-12); max block ratio − t {worst_t:.3e} (≤ 1e-12); {secs:.1}s"),
    )
}

/// 3. β = 1/2, B = 1: t = 1 − C/2 exactly, l_n = k_n = 2n on the full shift.
fn matrix_constants() -> Verdict {
    let sys = Fibered::new(
        Arc::new(FiberStructure::full_shift(2, 1).unwrap().with_bip(rpflab_core::shift::Bip {
            letters: [1].into_iter().collect(),
            omega_bi: rpflab_core::driver::EventSpec::Always,
            omega_bp: rpflab_core::driver::EventSpec::Always,
        })),
        path(DriverSystem::iid(vec![1.0]).unwrap(), 1),
    );
    let family = RandomMatrixFamily { universe: vec![1, 2], alphabets: vec![vec![1, 2]], matrices: vec![vec![vec![1.0, 1.0], vec![1.0, 1.0]]] };
    let rpf = matrix_rpf(&family, &sys, -60, 60, 50, 60).unwrap();
    let rep = matrix_decay_bounds(&family, &sys, &rpf, 60).unwrap();
    let l_dev = rep.l.iter().enumerate().map(|(i, &n)| (n as i64 - 2 * (i as i64 + 1)).abs()).max().unwrap_or(i64::MAX);
    let k_dev = rep.k.iter().enumerate().map(|(i, &n)| (n as i64 - 2 * (i as i64 + 1)).abs()).max().unwrap_or(i64::MAX);
    let exact = rep.t == 1.0 - rep.c / 2.0;
    // the transport certificate on the same instance
    let phi = family.potential(0.49).unwrap();
    let p = prepared(&phi, &sys, 20, 20);
    let b_is_one = p.cert.b_threshold == 1.0;
    let cert_exact = p.cert.t == 1.0 - p.cert.c_threshold / 2.0;
    let pass = exact && cert_exact && b_is_one && l_dev == 0 && k_dev == 0 && !rep.l.is_empty() && !rep.k.is_empty();
    verdict(
        3,
        "matrix constants",
        pass,
        format!("C = {}, t = {} (1 − C/2 exact: {exact}); certificate B = {}, t = {}; l = {:?}…, k = {:?}…, deviation {l_dev}/{k_dev}",
            rep.c, rep.t, p.cert.b_threshold, p.cert.t, &rep.l[..rep.l.len().min(4)], &rep.k[..rep.k.len().min(4)]),
    )
}

fn second_ratio(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let a = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let mut mods: Vec<f64> = a.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mods.sort_by(|x, y| y.partial_cmp(x).unwrap());
    mods[1] / mods[0]
}

/// 4. rank-one convergence rate within 5% of |λ₂/λ₁|, envelope 4tⁿ along l_n, horizon 60, under 5 s.
fn rank_one() -> Verdict {
    let start = Instant::now();
    let cases: Vec<Vec<Vec<f64>>> = vec![
        vec![vec![2.0, 1.0], vec![1.0, 3.0]],
        vec![vec![3.0, 1.0, 0.5], vec![1.0, 2.0, 1.0], vec![0.5, 1.5, 2.5]],
    ];
    let mut details = Vec::new();
    let mut pass = true;
    for m in cases {
        let k = m.len() as u32;
        let sys = full_shift(k);
        let family = RandomMatrixFamily { universe: (1..=k).collect(), alphabets: vec![(1..=k).collect()], matrices: vec![m.clone()] };
        let rpf = matrix_rpf(&family, &sys, -60, 60, 200, 60).unwrap();
        let rep = matrix_decay_bounds(&family, &sys, &rpf, 60).unwrap();
        let oracle = second_ratio(&m);
        let fitted = rpf.fit.map(|f| f.rate()).unwrap_or(f64::NAN);
        let rel = (fitted - oracle).abs() / oracle;
        let ok = rel <= 0.05 && rep.violations.is_empty();
        pass &= ok;
        details.push(format!("{k}x{k}: fitted {fitted:.5} vs |λ₂/λ₁| {oracle:.5} (rel {rel:.2e}), envelope violations {}", rep.violations.len()));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 5.0;
    verdict(4, "rank-one convergence", pass, format!("{}; {secs:.2}s", details.join("; ")))
}

/// 5. residual and normalization on every shipped config; matrix and operator triples agree.
fn rpf_residuals() -> Verdict {
    let mut worst_res = 0.0f64;
    let mut worst_norm = 0.0f64;
    let mut worst_agree = 0.0f64;
    let mut names = Vec::new();
    for (name, cfg) in configs() {
        let sys = cfg.system(cfg.seed).unwrap();
        let phi = cfg.potential().unwrap();
        let p = prepared(&phi, &sys, 20, 20);
        worst_res = worst_res.max(p.triple.diagnostics.max_residual);
        worst_norm = worst_norm.max(p.triple.diagnostics.max_norm_error);
        if let Some(fam) = cfg.matrix_family() {
            let m = matrix_rpf(&fam, &sys, 0, 20, 200, 20).unwrap();
            for j in 0..=20 {
                worst_agree = worst_agree.max((m.log_lambda(j).unwrap() - p.triple.log_lambda(j).unwrap()).abs());
                for (i, &a) in sys.alphabet(j).unwrap().iter().enumerate() {
                    worst_agree = worst_agree.max((m.mu(j).unwrap()[i] - p.triple.mu(j).unwrap().cylinder_mass(&[a])).abs());
                    worst_agree = worst_agree.max((m.h(j).unwrap()[i] - p.triple.h(j).unwrap().value_at(&sys, &[a]).unwrap()).abs());
                }
            }
        }
        names.push(name);
    }
    let pass = worst_res <= 1e-8 && worst_norm <= 1e-8 && worst_agree <= 1e-8;
    verdict(
        5,
        "RPF residuals",
        pass,
        format!("{} configs; max residual {worst_res:.2e}, max |∫h dμ − 1| {worst_norm:.2e}, matrix vs operator {worst_agree:.2e} (tol 1e-8)", names.len()),
    )
}

/// 6. 10⁴ sampled cylinders inside the Gibbs band.
fn gibbs() -> Verdict {
    let mut total = 0;
    let mut bad = 0;
    let mut f_max = 1.0f64;
    for (sys, phi) in [
        (golden_random(6), Potential::tables(2, 0.5, 2, depth_two_tables(2, &[1, 2], 0.4)).unwrap()),
        (random_three(6), Potential::tables(2, 0.5, 2, depth_two_tables(3, &[1, 2, 3], 0.3)).unwrap()),
    ] {
        let p = prepared(&phi, &sys, 20, 20);
        let fibers: Vec<i64> = (0..20).filter(|&j| sys.in_bi(j).unwrap()).take(8).collect();
        let rep = gibbs_check(&p.triple, &phi, &sys, &fibers, &GibbsOptions { samples: 10_000, max_len: p.triple.depth(), seed: 5 }).unwrap();
        total += rep.samples;
        bad += rep.violations.len();
        f_max = f_max.max(rep.f_max);
    }
    verdict(6, "Gibbs band", bad == 0 && total >= 10_000, format!("{total} cylinders, {bad} violations, largest F = {f_max:.4}"))
}

/// 7. ψ̂ vanishes for product measures, matches the Markov closed form, obeys C·tⁿ.
fn mixing() -> Verdict {
    let sys = full_shift(3);
    let phi = Potential::constant(-(3f64.ln()), 0.5).unwrap();
    let p = prepared(&phi, &sys, 20, 20);
    let product = psi_mixing(&p.tilde, &sys, &p.triple, &p.cert, &MixingOptions { depth: 3, horizon: 20 }).unwrap();
    let product_max = product.psi_abs.iter().fold(0.0f64, |m, v| m.max(*v));

    let m = Markov::new(0.3, 0.2);
    let sys2 = full_shift(2);
    let phi2 = m.potential(0.5);
    let p2 = prepared(&phi2, &sys2, 30, 30);
    let rep = psi_mixing(&p2.tilde, &sys2, &p2.triple, &p2.cert, &MixingOptions { depth: 3, horizon: 25 }).unwrap();
    let mut markov_err = 0.0f64;
    for n in 1..=25 {
        let pn = m.power(n + 1);
        let want = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| pn[i][j] / m.pi[j] - 1.0).fold(f64::MIN, f64::max);
        markov_err = markov_err.max((rep.psi[n - 1] - want).abs());
    }

    let sys3 = golden_random(8);
    let phi3 = Potential::tables(2, 0.5, 2, depth_two_tables(2, &[1, 2], 0.4)).unwrap();
    let p3 = prepared(&phi3, &sys3, 30, 30);
    let rep3 = psi_mixing(&p3.tilde, &sys3, &p3.triple, &p3.cert, &MixingOptions { depth: 3, horizon: 25 }).unwrap();
    let certified = rep.envelope_holds && rep3.envelope_holds && rep.violations.is_empty() && rep3.violations.is_empty();
    let pass = product_max <= 1e-12 && markov_err <= 1e-10 && certified;
    verdict(
        7,
        "ψ-mixing",
        pass,
        format!(
            "product max |ψ̂| {product_max:.2e} (≤ 1e-12); Markov error {markov_err:.2e} (≤ 1e-10); ψ̂_(l_n) ≤ C tⁿ: Markov {} (C = {:.3}), golden {} (C = {:.3})",
            rep.envelope_holds, rep.envelope_constant, rep3.envelope_holds, rep3.envelope_constant
        ),
    )
}

/// 8. Markov correlations equal π₁(1 − π₁)λ₂ⁿ; envelopes hold along l_n and k_n.
fn correlations() -> Verdict {
    let m = Markov::new(0.3, 0.2);
    let sys = full_shift(2);
    let phi = m.potential(0.5);
    let p = prepared(&phi, &sys, 30, 30);
    let opts = CorrelationOptions { f: Observable::letter(1), g: Observable::letter(1), horizon: 20, direct_lags: 6 };
    let rep = correlation_decay(&p.tilde, &sys, &p.triple, &p.cert, &opts).unwrap();
    let err = (0..=20).map(|n| (rep.curve[n] - m.pi[0] * (1.0 - m.pi[0]) * m.lambda2().powi(n as i32)).abs()).fold(0.0, f64::max);

    let sys2 = golden_random(9);
    let phi2 = Potential::tables(2, 0.5, 2, depth_two_tables(2, &[1, 2], 0.4)).unwrap();
    let p2 = prepared(&phi2, &sys2, 30, 30);
    let rep2 = correlation_decay(&p2.tilde, &sys2, &p2.triple, &p2.cert, &CorrelationOptions { horizon: 30, ..opts }).unwrap();
    let pass = err <= 1e-10 && rep.envelopes_hold && rep2.envelopes_hold && rep.violations.is_empty() && rep2.violations.is_empty();
    verdict(
        8,
        "correlation decay",
        pass,
        format!("Markov closed-form error {err:.2e} (≤ 1e-10, n ≤ 20); envelopes: Markov {}, golden {}", rep.envelopes_hold, rep2.envelopes_hold),
    )
}

/// 9. |ĥ + ∫φ dν − P̂| on the Markov instance at depth 12 and on the constant full shift.
fn equilibrium() -> Verdict {
    let m = Markov::new(0.3, 0.2);
    let sys = full_shift(2);
    let phi = m.potential(0.5);
    let p = prepared(&phi, &sys, 30, 30);
    let rep = equilibrium_gap(&phi, &p.tilde, &sys, &p.triple, &EquilibriumOptions::default()).unwrap();
    let oracle = (rep.entropy - m.entropy_rate()).abs();

    let sys2 = full_shift(3);
    let phi2 = Potential::constant(-(3f64.ln()), 0.5).unwrap();
    let p2 = prepared(&phi2, &sys2, 30, 30);
    let rep2 = equilibrium_gap(&phi2, &p2.tilde, &sys2, &p2.triple, &EquilibriumOptions::default()).unwrap();
    let pass = rep.gap <= 1e-2 && oracle <= 1e-2 && rep2.gap <= 1e-10;
    verdict(
        9,
        "equilibrium identity",
        pass,
        format!("Markov gap {:.2e}, |ĥ − h_oracle| {oracle:.2e} (≤ 1e-2); full shift gap {:.2e} (≤ 1e-10)", rep.gap, rep2.gap),
    )
}

/// 10. P̂_G = log N on full shifts and log of the golden ratio on the golden mean shift.
fn pressure() -> Verdict {
    let mut worst = 0.0f64;
    for n in [2u32, 3, 5] {
        let sys = full_shift(n);
        let phi = Potential::constant(0.0, 0.5).unwrap();
        let rep = gurevich_pressure(&phi, &sys, 1, 1000, None, None).unwrap();
        worst = worst.max((rep.estimate - (n as f64).ln()).abs());
    }
    let sys = golden_mean();
    let phi = Potential::constant(0.0, 0.5).unwrap();
    let rep = gurevich_pressure(&phi, &sys, 1, 1000, None, None).unwrap();
    let golden = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]).symmetric_eigenvalues().max().ln();
    let g_err = (rep.estimate - golden).abs();
    verdict(10, "Gurevič pressure", worst <= 1e-6 && g_err <= 1e-4, format!("full shifts max error {worst:.2e} (≤ 1e-6); golden mean error {g_err:.2e} (≤ 1e-4)"))
}

#[test]
fn acceptance() {
    let verdicts = vec![
        duality(),
        main_lemma(),
        matrix_constants(),
        rank_one(),
        rpf_residuals(),
        gibbs(),
        mixing(),
        correlations(),
        equilibrium(),
        pressure(),
    ];
    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| format!("[{}] {}: {}", v.id, v.name, v.detail)).collect();
    println!("{} of {} criteria passed", verdicts.len() - failed.len(), verdicts.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
