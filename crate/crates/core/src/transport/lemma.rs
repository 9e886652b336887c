//! Empirical check of the block contraction: Lipschitz seminorms of L̃ⁿ′f and L̃ˡf,
//! Wasserstein distances of pushed measures, and the explicit coupling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::potential::Potential;
use crate::shift::{Fibered, Metric};
use crate::transfer::{dual_apply, transfer_power, AtomicMeasure, CylinderFunction};

use super::certificate::{Certifier, ContractionCertificate};
use super::coupling::build_coupling;
use super::wasserstein;

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LemmaOptions {
    pub fibers: Vec<i64>,
    pub functions: usize,
    pub measures: usize,
    /// Atoms per random measure (capped by the available words).
    pub atoms: usize,
    /// Extra depth of random functions beyond the block length.
    pub extra_depth: usize,
    pub seed: u64,
}

impl Default for LemmaOptions {
    fn default() -> Self {
        Self { fibers: (0..8).collect(), functions: 8, measures: 4, atoms: 8, extra_depth: 2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub fiber: i64,
    pub n: usize,
    pub m: usize,
    pub t: f64,
    pub s: f64,
    /// max D̄(L̃ⁿ′f)/D̄(f)
    pub ratio_settle: f64,
    /// max D̄(L̃ˡf)/D̄(f)
    pub ratio_block: f64,
    /// max W(L̃ⁿ′*μ, L̃ⁿ′*ν)/W(μ, ν)
    pub w_ratio_settle: f64,
    /// max W(L̃ˡ*μ, L̃ˡ*ν)/W(μ, ν)
    pub w_ratio_block: f64,
    pub coupling_cost: f64,
    pub coupling_w: f64,
    pub coupling_marginal_error: f64,
    pub diagonal_mass: f64,
    pub diagonal_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub rows: Vec<LemmaRow>,
    pub violations: Vec<String>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn random_function(sys: &Fibered, k: i64, depth: usize, rng: &mut ChaCha8Rng) -> Result<CylinderFunction> {
    let ws = sys.words(k, depth)?;
    let values = (0..ws.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    CylinderFunction::new(ws, values)
}

fn random_measure(sys: &Fibered, k: i64, depth: usize, atoms: usize, rng: &mut ChaCha8Rng) -> Result<AtomicMeasure> {
    let ws = sys.words(k, depth)?;
    let pairs: Vec<_> = (0..atoms.min(ws.len())).map(|_| (ws.word(rng.gen_range(0..ws.len())).to_vec(), rng.gen_range(0.05..1.0))).collect();
    AtomicMeasure::from_pairs(k, depth, pairs)?.normalized()
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn check_fiber(phi: &Potential, sys: &Fibered, cert: &ContractionCertificate, c: &Certifier, k: i64, opts: &LemmaOptions, rng: &mut ChaCha8Rng) -> Result<(LemmaRow, Vec<String>)> {
    let block = cert.block(c, k)?;
    let (n, m, l) = (block.n, block.m, block.len());
    let r = c.r();
    let metric = |j: i64| -> Result<Metric> { Metric::adjusted(r, c.constants(j)?.alpha) };
    let (m0, mn, ml) = (metric(k)?, metric(k + n as i64)?, metric(k + l as i64)?);
    let mut bad = Vec::new();

    let (mut rs, mut rb) = (0.0f64, 0.0f64);
    for _ in 0..opts.functions {
        let f = random_function(sys, k, l + opts.extra_depth, rng)?;
        let d0 = f.lipschitz(m0);
        rs = rs.max(ratio(transfer_power(phi, sys, &f, n)?.lipschitz(mn), d0));
        rb = rb.max(ratio(transfer_power(phi, sys, &f, l)?.lipschitz(ml), d0));
    }

    let depth = phi.depth().saturating_sub(1).max(1) + 1;
    let cap = l + depth + 1;
    let (mut ws, mut wb) = (0.0f64, 0.0f64);
    for _ in 0..opts.measures {
        for (steps, target, after, out) in [(n, mn, m0, &mut ws), (l, ml, m0, &mut wb)] {
            let at = k + steps as i64;
            let mu = random_measure(sys, at, depth, opts.atoms, rng)?;
            let nu = random_measure(sys, at, depth, opts.atoms, rng)?;
            let before = wasserstein(sys, &mu, &nu, target)?.0;
            let pm = dual_apply(phi, sys, &mu, steps, cap)?;
            let pn = dual_apply(phi, sys, &nu, steps, cap)?;
            let (pm, pn) = (pm.scaled(1.0 / pm.mass())?, pn.scaled(1.0 / pn.mass())?);
            *out = out.max(ratio(wasserstein(sys, &pm, &pn, after)?.0, before));
        }
    }

    // the coupling for one random pair at the block end
    let end = k + l as i64;
    let pts = sys.words(end, depth)?;
    let x = pts.word(rng.gen_range(0..pts.len())).to_vec();
    let y = pts.word(rng.gen_range(0..pts.len())).to_vec();
    let q = build_coupling(phi, sys, c, k, n, &x, &y)?;
    let dx = dual_apply(phi, sys, &AtomicMeasure::dirac(end, x.clone())?, l, cap + depth)?;
    let dy = dual_apply(phi, sys, &AtomicMeasure::dirac(end, y.clone())?, l, cap + depth)?;
    let src = AtomicMeasure::from_pairs(k, q.plan.source[0].len(), q.plan.source.iter().cloned().zip(q.plan.source_weights.iter().copied()).collect())?;
    let tgt = AtomicMeasure::from_pairs(k, q.plan.target[0].len(), q.plan.target.iter().cloned().zip(q.plan.target_weights.iter().copied()).collect())?;
    let marginal = q.plan.marginal_error().max(src.sup_distance(sys, &dx)?).max(tgt.sup_distance(sys, &dy)?);
    let coupling_w = wasserstein(sys, &dx, &dy, m0)?.0;

    let fail = |what: &str, v: f64, bound: f64| format!("fiber {k}: {what} = {v:.6e} exceeds {bound:.6e}");
    if rs > 1.0 + SLACK {
        bad.push(fail("Lipschitz ratio after n′ steps", rs, 1.0));
    }
    if rb > block.t + SLACK {
        bad.push(fail("Lipschitz ratio after the block", rb, block.t));
    }
    if ws > 1.0 + SLACK {
        bad.push(fail("Wasserstein ratio after n′ steps", ws, 1.0));
    }
    if wb > block.t + SLACK {
        bad.push(fail("Wasserstein ratio after the block", wb, block.t));
    }
    if q.cost > q.s + SLACK {
        bad.push(fail("coupling cost", q.cost, q.s));
    }
    if coupling_w > q.cost + SLACK {
        bad.push(fail("optimal transport cost", coupling_w, q.cost));
    }
    if marginal > 1e-10 {
        bad.push(fail("coupling marginal error", marginal, 1e-10));
    }
    if q.diagonal_mass < q.diagonal_bound - SLACK {
        bad.push(format!("fiber {k}: matched mass {:.6e} below C/B = {:.6e}", q.diagonal_mass, q.diagonal_bound));
    }
    let row = LemmaRow {
        fiber: k,
        n,
        m,
        t: block.t,
        s: block.s,
        ratio_settle: rs,
        ratio_block: rb,
        w_ratio_settle: ws,
        w_ratio_block: wb,
        coupling_cost: q.cost,
        coupling_w,
        coupling_marginal_error: marginal,
        diagonal_mass: q.diagonal_mass,
        diagonal_bound: q.diagonal_bound,
    };
    Ok((row, bad))
}

/// Runs the block checks on every requested fiber with the normalized potential `phi`.
pub fn verify_main_lemma(phi: &Potential, sys: &Fibered, cert: &ContractionCertificate, opts: &LemmaOptions) -> Result<LemmaReport> {
    let c = cert.certifier(phi, sys);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for &k in &opts.fibers {
        let (row, bad) = check_fiber(phi, sys, cert, &c, k, opts, &mut rng)?;
        rows.push(row);
        violations.extend(bad);
    }
    Ok(LemmaReport { rows, violations })
}
