use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::potential::{available_horizon, index_one_distortion, Potential, DEFAULT_DISTORTION_HORIZON};
use crate::shift::{Fibered, Letter};

use super::RpfTriple;

#[derive(Debug, Clone)]
pub struct GibbsOptions {
    pub samples: usize,
    /// Longest cylinder sampled; at most the triple's working depth.
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsFiber {
    pub fiber: i64,
    /// min over b ∈ I ∩ W¹ of μ([b])
    pub e: f64,
    /// min over letters c of the previous fiber of μ(T[c])
    pub e_direct: f64,
    /// log of the index-1 distortion factor B′
    pub log_b_prime: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsViolation {
    pub fiber: i64,
    pub word: Vec<Letter>,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsReport {
    pub samples: usize,
    pub fibers: Vec<GibbsFiber>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Largest F = B′/E over the tested fibers; every band lies inside [1/F, F].
    pub f_max: f64,
    pub violations: Vec<GibbsViolation>,
}

fn fiber_band(triple: &RpfTriple, phi: &Potential, sys: &Fibered, w: i64) -> Result<GibbsFiber> {
    let mu = triple.mu(w)?;
    let letters = sys.bip_letters(w)?;
    if letters.is_empty() {
        return Err(LabError::Other(format!("fiber {w}: I ∩ W¹ is empty")));
    }
    let e = letters.iter().map(|&b| mu.cylinder_mass(&[b])).fold(f64::INFINITY, f64::min);
    if !(e > 0.0) {
        return Err(LabError::Other(format!("fiber {w}: E = 0, the big images property fails")));
    }
    let e_direct = sys
        .alphabet(w - 1)?
        .iter()
        .map(|&c| sys.successors(w - 1, c).map(|s| s.iter().map(|&b| mu.cylinder_mass(&[b])).sum::<f64>()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let horizon = available_horizon(phi, sys, w, DEFAULT_DISTORTION_HORIZON);
    let log_b = index_one_distortion(phi, sys, w, horizon)?;
    let bp = log_b.exp();
    Ok(GibbsFiber { fiber: w, e, e_direct, log_b_prime: log_b, lower: e / bp, upper: bp })
}

/// Samples cylinders [a] ⊂ X_{θ⁻ᵏω} and checks μ([a]) Λ_k / e^{S_kφ(x)} ∈ [E/B′, B′].
pub fn gibbs_check(triple: &RpfTriple, phi: &Potential, sys: &Fibered, fibers: &[i64], opts: &GibbsOptions) -> Result<GibbsReport> {
    let max_len = opts.max_len.min(triple.depth());
    if max_len == 0 {
        return Err(LabError::Depth("cylinder length must be positive".into()));
    }
    let mut bands = Vec::new();
    for &w in fibers {
        if sys.in_bi(w)? && w - max_len as i64 >= triple.first && w - 1 <= triple.last {
            bands.push(fiber_band(triple, phi, sys, w)?);
        }
    }
    if bands.is_empty() {
        return Err(LabError::Other("no tested fiber lies in the big images event with enough history".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let path = sys.path();
    let (mut min_ratio, mut max_ratio) = (f64::INFINITY, 0.0f64);
    let mut violations = Vec::new();
    for _ in 0..opts.samples {
        let band = &bands[rng.gen_range(0..bands.len())];
        let k = rng.gen_range(1..=max_len);
        let start = band.fiber - k as i64;
        let ws = sys.words(start, k)?;
        let a = ws.word(rng.gen_range(0..ws.len()));
        let x = sys.canonical_extension(start, a, k + phi.depth() - 1)?;
        let mass = triple.mu(start)?.cylinder_mass(a);
        let ratio = mass * (triple.log_big_lambda(start, k)? - phi.birkhoff(path, start, &x, k)?).exp();
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        let slack = 1e-10;
        if !(ratio.is_finite() && ratio > 0.0) || ratio < band.lower * (1.0 - slack) || ratio > band.upper * (1.0 + slack) {
            violations.push(GibbsViolation { fiber: band.fiber, word: a.to_vec(), ratio, lower: band.lower, upper: band.upper });
        }
    }
    let f_max = bands.iter().map(|b| b.upper / b.e).fold(1.0, f64::max);
    Ok(GibbsReport { samples: opts.samples, fibers: bands, min_ratio, max_ratio, f_max, violations })
}
