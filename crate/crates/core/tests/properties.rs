mod common;

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use common::*;
use proptest::prelude::*;
use rpflab_core::config::ExperimentConfig;
use rpflab_core::driver::{DriverPath, DriverSystem};
use rpflab_core::pipeline::Prepared;
use rpflab_core::potential::Potential;
use rpflab_core::shift::{Fibered, Letter, Metric};
use rpflab_core::transfer::{dual_step, transfer_apply, AtomicMeasure, CylinderFunction};
use rpflab_core::transport::{lipschitz_dual, wasserstein};

const DEPTH: usize = 3;

fn shift3() -> &'static Fibered {
    static SYS: OnceLock<Fibered> = OnceLock::new();
    SYS.get_or_init(|| full_shift(3))
}

fn random_three_prepared() -> &'static (Fibered, Prepared) {
    static P: OnceLock<(Fibered, Prepared)> = OnceLock::new();
    P.get_or_init(|| {
        let sys = random_three(13);
        let phi = Potential::tables(2, 0.5, 2, depth_two_tables(3, &[1, 2, 3], 0.3)).unwrap();
        let p = prepared(&phi, &sys, 12, 12);
        (sys, p)
    })
}

/// A probability measure on depth-3 words of the full 3-shift from raw weights.
fn measure(weights: &[(usize, f64)]) -> AtomicMeasure {
    let ws = shift3().words(0, DEPTH).unwrap();
    let pairs = weights.iter().map(|&(i, x)| (ws.word(i % ws.len()).to_vec(), x)).collect();
    AtomicMeasure::from_pairs(0, DEPTH, pairs).unwrap().normalized().unwrap()
}

fn atoms() -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::vec((0usize..27, 0.01f64..1.0), 1..=8)
}

fn metric() -> impl Strategy<Value = Metric> {
    (0.1f64..0.9, 1.0f64..6.0).prop_map(|(r, a)| Metric::adjusted(r, a).unwrap())
}

fn word(len: usize) -> impl Strategy<Value = Vec<Letter>> {
    prop::collection::vec(1u32..=3, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wasserstein_is_a_metric(a in atoms(), b in atoms(), c in atoms(), m in metric()) {
        let sys = shift3();
        let (mu, nu, rho) = (measure(&a), measure(&b), measure(&c));
        let w = |x: &AtomicMeasure, y: &AtomicMeasure| wasserstein(sys, x, y, m).unwrap().0;
        prop_assert!(w(&mu, &mu).abs() < 1e-12);
        prop_assert!((w(&mu, &nu) - w(&nu, &mu)).abs() < 1e-10);
        prop_assert!(w(&mu, &rho) <= w(&mu, &nu) + w(&nu, &rho) + 1e-10);
    }

    #[test]
    fn duality_gap_closes(a in atoms(), b in atoms(), m in metric()) {
        let sys = shift3();
        let (mu, nu) = (measure(&a), measure(&b));
        let (w, plan) = wasserstein(sys, &mu, &nu, m).unwrap();
        let (d, f) = lipschitz_dual(sys, &mu, &nu, m).unwrap();
        prop_assert!((w - d).abs() <= 1e-8);
        prop_assert!(plan.marginal_error() <= 1e-12);
        prop_assert!(f.lipschitz(m) <= 1.0 + 1e-9);
    }

    #[test]
    fn shift_metric_is_ultrametric(x in word(6), y in word(6), z in word(6), m in metric()) {
        let (xy, yz, xz) = (m.words(&x, &y), m.words(&y, &z), m.words(&x, &z));
        prop_assert!(xz <= xy.max(yz) + 1e-15);
        prop_assert_eq!(xy, m.words(&y, &x));
        prop_assert!((0.0..=1.0).contains(&xy));
    }

    #[test]
    fn driver_window_is_seed_determined(seed in any::<u64>(), lo in -40i64..0, hi in 0i64..40) {
        let system = Arc::new(DriverSystem::markov(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap());
        let small = DriverPath::sample(system.clone(), 48, seed, 1 << 12).unwrap();
        let again = DriverPath::sample(system.clone(), 48, seed, 1 << 12).unwrap();
        let mut grown = DriverPath::sample(system, 4, seed, 1 << 12).unwrap();
        grown.ensure(-300, 300).unwrap();
        prop_assert_eq!(small.window(lo, hi).unwrap(), again.window(lo, hi).unwrap());
        prop_assert_eq!(small.window(lo, hi).unwrap(), grown.window(lo, hi).unwrap());
    }

    #[test]
    fn config_roundtrips(seed in any::<u64>(), r in 0.05f64..0.95, working in 1usize..6) {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["iid_full_shift.json", "markov2.json", "golden_random.json", "matrices3.json"] {
            let mut cfg = ExperimentConfig::from_path(&dir.join(name)).unwrap();
            cfg.seed = seed;
            cfg.metric.r = r;
            cfg.depths.working = working;
            let text = serde_json::to_string(&cfg).unwrap();
            prop_assert_eq!(&ExperimentConfig::from_json(&text).unwrap(), &cfg);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn normalized_operator_fixes_constants(j in -10i64..10, c in -5.0f64..5.0) {
        let (sys, p) = random_three_prepared();
        let one = CylinderFunction::constant(sys, j, 2, c).unwrap();
        let image = transfer_apply(&p.tilde, sys, &one).unwrap();
        prop_assert!(image.values().iter().all(|v| (v - c).abs() <= 1e-10 * c.abs().max(1.0)));
    }

    #[test]
    fn nu_is_equivariant(j in -10i64..10, values in prop::collection::vec(-3.0f64..3.0, 9)) {
        let (sys, p) = random_three_prepared();
        let f = CylinderFunction::from_fn(sys, j, 2, |w| values[((w[0] - 1) * 3 + (w[1] - 1)) as usize]).unwrap();
        let lf = transfer_apply(&p.tilde, sys, &f).unwrap();
        let lhs = p.triple.nu(sys, j + 1).unwrap().integrate(sys, &lf).unwrap();
        let rhs = p.triple.nu(sys, j).unwrap().integrate(sys, &f).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn dual_preserves_mass(j in -10i64..10, weights in prop::collection::vec(0.0f64..1.0, 1..=8)) {
        let (sys, p) = random_three_prepared();
        let ws = sys.words(j + 1, 2).unwrap();
        let pairs = weights.iter().enumerate().map(|(i, &x)| (ws.word(i % ws.len()).to_vec(), x)).collect();
        let mu = AtomicMeasure::from_pairs(j + 1, 2, pairs).unwrap();
        let pulled = dual_step(&p.tilde, sys, &mu).unwrap();
        prop_assert_eq!(pulled.anchor(), j);
        prop_assert!((pulled.mass() - mu.mass()).abs() <= 1e-10 * mu.mass().max(1.0));
        prop_assert!(pulled.weights().iter().all(|&x| x >= 0.0));
    }
}
