//! Contraction constants B, α, n, o, m, U, C, t per fiber, the event Ω_{B,C},
//! contraction blocks and the return sequences built from them.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::potential::{available_horizon, distortion_with_kappa_max, Potential, DEFAULT_DISTORTION_HORIZON};
use crate::shift::{Fibered, Letter, Metric};
use crate::transfer::CylinderFunction;

/// How n_ω is chosen from α_ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NRule {
    /// Smallest n ≥ 1 with rⁿ α < 1, i.e. n = ⌊−log α / log r⌋ + 1.
    #[default]
    Minimal,
    /// Smallest n ≥ 1 with rⁿ α ≤ 1/2, which makes 1 − C/(2B) dominate every block ratio.
    Half,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    pub beta: f64,
    pub n_rule: NRule,
    /// Distortion series horizon.
    pub horizon: usize,
    /// Longest reachability scan for m_ω and longest search for returns.
    pub max_scan: usize,
    /// Per driver state choice of o; the default is min W¹.
    pub origin: Option<Vec<Letter>>,
    pub b_threshold: Option<f64>,
    pub c_threshold: Option<f64>,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { beta: 0.5, n_rule: NRule::Minimal, horizon: DEFAULT_DISTORTION_HORIZON, max_scan: 4096, origin: None, b_threshold: None, c_threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberConstants {
    pub fiber: i64,
    pub b: f64,
    pub alpha: f64,
    pub n: usize,
    pub o: Letter,
    pub m: usize,
    /// Lexicographically minimal words from o to each letter of I ∩ W¹ at fiber + m − 1.
    pub u_words: Vec<Vec<Letter>>,
    pub c: f64,
}

impl FiberConstants {
    /// The minimal word of U whose last letter may precede `x0`.
    pub fn u_for(&self, sys: &Fibered, x0: Letter) -> Result<&[Letter]> {
        let last = self.fiber + self.m as i64 - 1;
        for u in &self.u_words {
            if sys.allowed(last, u[self.m - 1], x0)? {
                return Ok(u);
            }
        }
        Err(LabError::InvalidStructure(format!("letter {x0} at fiber {} has no predecessor in I", last + 1)))
    }
}

/// One contraction block: n steps of metric settling followed by m steps through I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start: i64,
    pub n: usize,
    pub m: usize,
    pub end: i64,
    pub alpha: f64,
    /// 1 − (1 − rⁿα) C/B with C, B taken at start + n.
    pub s: f64,
    pub t: f64,
}

impl Block {
    pub fn len(&self) -> usize {
        self.n + self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sequences {
    pub forward: Vec<Block>,
    /// l_1 < l_2 < … : ends of consecutive blocks started at fiber 0.
    pub l: Vec<usize>,
    /// Π of the block ratios up to l_i.
    pub l_products: Vec<f64>,
    /// k_1 < k_2 < … : chains started at −k_i contain at least i blocks ending by fiber 0.
    pub k: Vec<usize>,
    pub k_products: Vec<f64>,
    pub k_blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub options: CertificateOptions,
    pub r: f64,
    pub kappa_max: f64,
    pub lo: i64,
    pub hi: i64,
    pub fibers: Vec<FiberConstants>,
    /// t_ω with n = n_ω for every fiber of the window.
    pub t_fibers: Vec<f64>,
    pub b_threshold: f64,
    pub c_threshold: f64,
    /// Fraction of window fibers in Ω_{B,C}.
    pub event_frequency: f64,
    /// 1 − C/(2B) from the thresholds.
    pub t: f64,
    /// Largest block ratio met by the return sequences.
    pub t_observed: f64,
    /// B/β for the threshold B.
    pub c: f64,
    /// Largest m_ω + n along the window (empirical essential supremum).
    pub k_essential: usize,
    pub sequences: Sequences,
    pub s: Option<f64>,
    pub c_star: Option<f64>,
    pub big_k: Option<f64>,
}

impl ContractionCertificate {
    pub fn fiber(&self, j: i64) -> Result<&FiberConstants> {
        if j < self.lo || j > self.hi {
            return Err(LabError::OutsidePath { index: j, lo: self.lo, hi: self.hi });
        }
        Ok(&self.fibers[(j - self.lo) as usize])
    }

    pub fn metric(&self, j: i64) -> Result<Metric> {
        Metric::adjusted(self.r, self.fiber(j)?.alpha)
    }

    /// A certifier with the same options and thresholds, for fibers outside the window.
    pub fn certifier<'a>(&self, phi: &'a Potential, sys: &'a Fibered) -> Certifier<'a> {
        Certifier::with_kappa(phi, sys, self.options.clone(), self.kappa_max)
    }

    /// The block from fiber j under the certificate's thresholds.
    pub fn block(&self, certifier: &Certifier, j: i64) -> Result<Block> {
        certifier.block(j, self.b_threshold, self.c_threshold)
    }
}

/// Lazily memoized constants for one normalized potential along one path.
pub struct Certifier<'a> {
    phi: &'a Potential,
    sys: &'a Fibered,
    opts: CertificateOptions,
    kappa_max: f64,
    cache: RefCell<HashMap<i64, FiberConstants>>,
    blocks: RefCell<HashMap<i64, Block>>,
}

impl<'a> Certifier<'a> {
    pub fn new(phi: &'a Potential, sys: &'a Fibered, opts: CertificateOptions) -> Result<Self> {
        if !(opts.beta > 0.0 && opts.beta < 1.0) {
            return Err(LabError::Config { field: "beta".into(), message: format!("{} outside (0,1)", opts.beta) });
        }
        let kappa_max = phi.kappa_max(sys)?;
        Ok(Self { phi, sys, opts, kappa_max, cache: RefCell::default(), blocks: RefCell::default() })
    }

    fn with_kappa(phi: &'a Potential, sys: &'a Fibered, opts: CertificateOptions, kappa_max: f64) -> Self {
        Self { phi, sys, opts, kappa_max, cache: RefCell::default(), blocks: RefCell::default() }
    }

    pub fn options(&self) -> &CertificateOptions {
        &self.opts
    }

    pub fn r(&self) -> f64 {
        self.phi.r()
    }

    pub fn b(&self, j: i64) -> Result<f64> {
        let h = available_horizon(self.phi, self.sys, j, self.opts.horizon);
        Ok(distortion_with_kappa_max(self.phi, self.sys, j, h, self.kappa_max)?.b)
    }

    /// n for a given α under the configured rule.
    pub fn n_for(&self, alpha: f64) -> usize {
        let r = self.r();
        let target = match self.opts.n_rule {
            NRule::Minimal => 1.0,
            NRule::Half => 0.5,
        };
        let mut n = match self.opts.n_rule {
            NRule::Minimal => ((-alpha.ln() / r.ln()).floor() as i64 + 1).max(1) as usize,
            NRule::Half => 1,
        };
        // guard against rounding at the boundary
        while r.powi(n as i32) * alpha >= target && self.opts.n_rule == NRule::Minimal || r.powi(n as i32) * alpha > target {
            n += 1;
        }
        n
    }

    fn origin(&self, j: i64) -> Result<Letter> {
        let alphabet = self.sys.alphabet(j)?;
        match &self.opts.origin {
            Some(o) => {
                let s = self.sys.state(j)?;
                let a = *o.get(s).ok_or_else(|| LabError::Config { field: "origin".into(), message: format!("no entry for state {s}") })?;
                if alphabet.binary_search(&a).is_err() {
                    return Err(LabError::Config { field: "origin".into(), message: format!("letter {a} not in the alphabet of state {s}") });
                }
                Ok(a)
            }
            None => Ok(alphabet[0]),
        }
    }

    /// m: first n ≥ 1 with fiber j + n in Ω_bp and I ∩ W¹_{j+n−1} reachable from o in n letters.
    fn mixing_time(&self, j: i64, o: Letter) -> Result<usize> {
        let mut reach: BTreeSet<Letter> = [o].into_iter().collect();
        for n in 1..=self.opts.max_scan {
            let fiber = j + n as i64 - 1;
            if self.sys.in_bp(fiber + 1)? && self.sys.bip_letters(fiber)?.iter().all(|b| reach.contains(b)) {
                if self.sys.bip_letters(fiber)?.is_empty() {
                    return Err(LabError::InvalidStructure(format!("I ∩ W¹ is empty at fiber {fiber}")));
                }
                return Ok(n);
            }
            let mut next = BTreeSet::new();
            for &a in &reach {
                next.extend(self.sys.successors(fiber, a)?);
            }
            reach = next;
        }
        Err(LabError::InsufficientReturns { found: 0, wanted: 1 })
    }

    /// Lexicographically minimal admissible word of length m from `o` at j to `b`.
    fn minimal_word(&self, j: i64, o: Letter, m: usize, b: Letter) -> Result<Vec<Letter>> {
        // can[i]: letters at fiber j + i that reach b at fiber j + m − 1
        let mut can: Vec<BTreeSet<Letter>> = vec![BTreeSet::new(); m];
        can[m - 1].insert(b);
        for i in (0..m - 1).rev() {
            let fiber = j + i as i64;
            let mut set = BTreeSet::new();
            for &a in self.sys.alphabet(fiber)? {
                if self.sys.successors(fiber, a)?.iter().any(|c| can[i + 1].contains(c)) {
                    set.insert(a);
                }
            }
            can[i] = set;
        }
        if !can[0].contains(&o) {
            return Err(LabError::InvalidStructure(format!("letter {b} unreachable from {o} at fiber {j}")));
        }
        let mut word = vec![o];
        for i in 1..m {
            let prev = word[i - 1];
            let next = self
                .sys
                .successors(j + i as i64 - 1, prev)?
                .into_iter()
                .find(|c| can[i].contains(c))
                .expect("reachability was checked");
            word.push(next);
        }
        Ok(word)
    }

    pub fn constants(&self, j: i64) -> Result<FiberConstants> {
        if let Some(c) = self.cache.borrow().get(&j) {
            return Ok(c.clone());
        }
        let b = self.b(j)?;
        let alpha = b / self.opts.beta;
        let n = self.n_for(alpha);
        let o = self.origin(j)?;
        let m = self.mixing_time(j, o)?;
        let last = j + m as i64 - 1;
        let mut u_words = self.sys.bip_letters(last)?.into_iter().map(|b| self.minimal_word(j, o, m, b)).collect::<Result<Vec<_>>>()?;
        u_words.sort();
        let mut fc = FiberConstants { fiber: j, b, alpha, n, o, m, u_words, c: 0.0 };
        // C = min over x of exp S_m φ(u(x) x); φ is constant on cylinders so a finite minimum is exact
        let q = self.phi.depth().saturating_sub(1).max(1);
        let ys = self.sys.words(j + m as i64, q)?;
        let mut c = f64::INFINITY;
        let mut x = Vec::with_capacity(m + q);
        for y in ys.iter() {
            let u = fc.u_for(self.sys, y[0])?;
            x.clear();
            x.extend_from_slice(u);
            x.extend_from_slice(y);
            c = c.min(self.phi.birkhoff(self.sys.path(), j, &x, m)?.exp());
        }
        fc.c = c;
        self.cache.borrow_mut().insert(j, fc.clone());
        Ok(fc)
    }

    /// max{β, 1 − (1 − rⁿα_j) C_{j+n}/B_{j+n}} and the inner term.
    pub fn ratio(&self, j: i64, n: usize) -> Result<(f64, f64)> {
        let here = self.constants(j)?;
        let there = self.constants(j + n as i64)?;
        let settle = self.r().powi(n as i32) * here.alpha;
        if settle >= 1.0 {
            return Err(LabError::Other(format!("n = {n} too small at fiber {j}: rⁿα = {settle}")));
        }
        let s = 1.0 - (1.0 - settle) * there.c / there.b;
        Ok((self.opts.beta.max(s), s))
    }

    pub fn in_event(&self, j: i64, b_thr: f64, c_thr: f64) -> Result<bool> {
        let fc = self.constants(j)?;
        Ok(fc.b <= b_thr * (1.0 + 1e-12) && fc.c >= c_thr * (1.0 - 1e-12))
    }

    /// The block from j: n′ = min{n ≥ n_j : j + n ∈ Ω_{B,C}}, then m at j + n′.
    pub fn block(&self, j: i64, b_thr: f64, c_thr: f64) -> Result<Block> {
        if let Some(b) = self.blocks.borrow().get(&j) {
            return Ok(b.clone());
        }
        let here = self.constants(j)?;
        let mut n = here.n;
        while !self.in_event(j + n as i64, b_thr, c_thr)? {
            n += 1;
            if n > here.n + self.opts.max_scan {
                return Err(LabError::InsufficientReturns { found: 0, wanted: 1 });
            }
        }
        let m = self.constants(j + n as i64)?.m;
        let (t, s) = self.ratio(j, n)?;
        let block = Block { start: j, n, m, end: j + (n + m) as i64, alpha: here.alpha, s, t };
        self.blocks.borrow_mut().insert(j, block.clone());
        Ok(block)
    }
}

/// Per-fiber constants on `lo..=hi`, thresholds for Ω_{B,C} and the derived t and c.
pub fn contraction_constants(phi: &Potential, sys: &Fibered, lo: i64, hi: i64, opts: &CertificateOptions) -> Result<ContractionCertificate> {
    if lo > hi {
        return Err(LabError::Other(format!("empty window [{lo}, {hi}]")));
    }
    let cert = Certifier::new(phi, sys, opts.clone())?;
    let fibers = (lo..=hi).map(|j| cert.constants(j)).collect::<Result<Vec<_>>>()?;
    let b_threshold = opts.b_threshold.unwrap_or_else(|| fibers.iter().map(|f| f.b).fold(1.0, f64::max));
    let c_threshold = opts.c_threshold.unwrap_or_else(|| fibers.iter().map(|f| f.c).fold(f64::INFINITY, f64::min));
    if !(c_threshold > 0.0) || b_threshold < 1.0 {
        return Err(LabError::Config { field: "certificate".into(), message: format!("thresholds B = {b_threshold}, C = {c_threshold} are degenerate") });
    }
    let mut t_fibers = Vec::with_capacity(fibers.len());
    let mut k_essential = 0;
    let mut in_event = 0usize;
    for f in &fibers {
        t_fibers.push(match cert.ratio(f.fiber, f.n) {
            Ok((t, _)) => t,
            Err(_) => f64::NAN,
        });
        if let Ok(next) = cert.constants(f.fiber + f.n as i64) {
            k_essential = k_essential.max(f.n + next.m);
        }
        if cert.in_event(f.fiber, b_threshold, c_threshold)? {
            in_event += 1;
        }
    }
    let t = 1.0 - c_threshold / (2.0 * b_threshold);
    Ok(ContractionCertificate {
        options: CertificateOptions { b_threshold: Some(b_threshold), c_threshold: Some(c_threshold), ..opts.clone() },
        r: phi.r(),
        kappa_max: cert.kappa_max,
        lo,
        hi,
        fibers,
        t_fibers,
        b_threshold,
        c_threshold,
        event_frequency: in_event as f64 / (hi - lo + 1) as f64,
        t,
        t_observed: f64::NAN,
        c: b_threshold / opts.beta,
        k_essential,
        sequences: Sequences::default(),
        s: None,
        c_star: None,
        big_k: None,
    })
}

/// Forward blocks from fiber 0 up to `forward` and backward chains from −1 … −`backward`,
/// stored in the certificate together with the largest block ratio met.
pub fn return_sequences(phi: &Potential, sys: &Fibered, cert: &mut ContractionCertificate, forward: usize, backward: usize) -> Result<()> {
    let c = cert.certifier(phi, sys);
    let (bt, ct) = (cert.b_threshold, cert.c_threshold);
    let mut seq = Sequences::default();
    let mut t_obs = 0.0f64;
    let mut at = 0i64;
    let mut prod = 1.0;
    while at < forward as i64 {
        let b = c.block(at, bt, ct)?;
        if b.end > forward as i64 {
            break;
        }
        prod *= b.t;
        t_obs = t_obs.max(b.t);
        at = b.end;
        seq.l.push(at as usize);
        seq.l_products.push(prod);
        seq.forward.push(b);
    }
    // complete blocks of the chain started at −k that end by fiber 0
    let chain = |k: usize| -> Result<(usize, f64, f64)> {
        let mut at = -(k as i64);
        let (mut count, mut prod, mut worst) = (0usize, 1.0, 0.0f64);
        loop {
            let b = c.block(at, bt, ct)?;
            if b.end > 0 {
                return Ok((count, prod, worst));
            }
            count += 1;
            prod *= b.t;
            worst = worst.max(b.t);
            at = b.end;
        }
    };
    let mut want = 1usize;
    for k in 1..=backward {
        let (count, prod, worst) = chain(k)?;
        if count >= want {
            seq.k.push(k);
            seq.k_products.push(prod);
            seq.k_blocks.push(count);
            t_obs = t_obs.max(worst);
            want += 1;
        }
    }
    cert.t_observed = t_obs;
    cert.sequences = seq;
    Ok(())
}

/// K = 2‖1/h‖∞ max{‖h‖∞‖1/h‖∞ − 1, B − 1, 1}.
pub fn big_k(h: &CylinderFunction, b: f64) -> f64 {
    let inv = 1.0 / h.min();
    let sup = h.max();
    2.0 * inv * (sup * inv - 1.0).max(b - 1.0).max(1.0)
}
