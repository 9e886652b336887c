//! Locally constant potentials, Birkhoff sums, variations and distortion constants.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::DriverPath;
use crate::error::{LabError, Result};
use crate::shift::{Fibered, Letter, Point, WordSet};

pub const DEFAULT_DISTORTION_HORIZON: usize = 128;

pub type Table = HashMap<Vec<Letter>, f64>;
type StateFn = Arc<dyn Fn(usize, &[Letter]) -> Option<f64> + Send + Sync>;

#[derive(Clone)]
enum Source {
    Constant(f64),
    ByState(Vec<Table>),
    Function(StateFn),
    /// Tables keyed by absolute path index.
    ByFiber { first: i64, tables: Vec<Table> },
}

/// A potential constant on cylinders of length `depth`.
#[derive(Clone)]
pub struct Potential {
    depth: usize,
    r: f64,
    index: usize,
    source: Source,
    kappa_bound: Option<f64>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            Source::Constant(c) => format!("constant {c}"),
            Source::ByState(t) => format!("{} state tables", t.len()),
            Source::Function(_) => "state function".to_string(),
            Source::ByFiber { first, tables } => format!("fiber tables [{first}, {})", first + tables.len() as i64),
        };
        write!(f, "Potential(depth {}, r {}, index {}, {kind})", self.depth, self.r, self.index)
    }
}

fn check_params(depth: usize, r: f64, index: usize) -> Result<()> {
    if depth == 0 {
        return Err(LabError::Depth("potential depth must be at least 1".into()));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(LabError::Metric(format!("r = {r} outside (0,1)")));
    }
    if !(1..=2).contains(&index) {
        return Err(LabError::Other(format!("Hölder index {index} must be 1 or 2")));
    }
    Ok(())
}

impl Potential {
    pub fn constant(c: f64, r: f64) -> Result<Self> {
        check_params(1, r, 2)?;
        Ok(Self { depth: 1, r, index: 2, source: Source::Constant(c), kappa_bound: None })
    }

    pub fn tables(depth: usize, r: f64, index: usize, tables: Vec<Table>) -> Result<Self> {
        check_params(depth, r, index)?;
        for (s, t) in tables.iter().enumerate() {
            if let Some((w, v)) = t.iter().find(|(w, v)| w.len() != depth || !v.is_finite()) {
                return Err(LabError::Other(format!("state {s}: bad table entry {w:?} -> {v}")));
            }
        }
        Ok(Self { depth, r, index, source: Source::ByState(tables), kappa_bound: None })
    }

    /// Potential given by a function of the driver state and the first `depth` letters.
    pub fn function<F>(depth: usize, r: f64, index: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, &[Letter]) -> Option<f64> + Send + Sync + 'static,
    {
        check_params(depth, r, index)?;
        Ok(Self { depth, r, index, source: Source::Function(Arc::new(f)), kappa_bound: None })
    }

    /// Tables for consecutive absolute fibers starting at `first`.
    pub fn by_fiber(depth: usize, r: f64, index: usize, first: i64, tables: Vec<Table>) -> Result<Self> {
        check_params(depth, r, index)?;
        Ok(Self { depth, r, index, source: Source::ByFiber { first, tables }, kappa_bound: None })
    }

    /// φ(x) = log p_{x₀x₁} with `matrices[s]` rows over the alphabet of state s
    /// and columns over the letter universe.
    pub fn log_matrix(universe: Vec<Letter>, alphabets: Vec<Vec<Letter>>, matrices: Vec<Vec<Vec<f64>>>, r: f64) -> Result<Self> {
        for (s, m) in matrices.iter().enumerate() {
            if m.len() != alphabets[s].len() || m.iter().any(|row| row.len() != universe.len()) {
                return Err(LabError::Other(format!("state {s}: weight matrix has the wrong shape")));
            }
            if m.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(LabError::Other(format!("state {s}: weights must be finite and nonnegative")));
            }
        }
        Self::function(2, r, 2, move |s, w| {
            let i = alphabets[s].binary_search(&w[0]).ok()?;
            let j = universe.binary_search(&w[1]).ok()?;
            let p = matrices[s][i][j];
            (p > 0.0).then(|| p.ln())
        })
    }

    /// Declares a uniform bound on κ; it is checked against the computed value.
    pub fn with_kappa_bound(mut self, k: f64) -> Self {
        self.kappa_bound = Some(k);
        self
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn is_fiberwise(&self) -> bool {
        matches!(self.source, Source::ByFiber { .. })
    }

    /// Range of relative fibers covered by fiberwise tables.
    pub fn fiber_range(&self, path: &DriverPath) -> Option<(i64, i64)> {
        match &self.source {
            Source::ByFiber { first, tables } => {
                let shift = path.absolute(0);
                Some((first - shift, first + tables.len() as i64 - 1 - shift))
            }
            _ => None,
        }
    }

    /// φ at fiber n on the first `depth` letters of `letters`.
    pub fn evaluate(&self, path: &DriverPath, n: i64, letters: &[Letter]) -> Result<f64> {
        if letters.len() < self.depth {
            return Err(LabError::Depth(format!("need {} letters, got {}", self.depth, letters.len())));
        }
        let w = &letters[..self.depth];
        let missing = || LabError::Inadmissible { fiber: n, word: w.to_vec() };
        match &self.source {
            Source::Constant(c) => Ok(*c),
            Source::ByState(t) => t[path.state(n)?].get(w).copied().ok_or_else(missing),
            Source::Function(f) => f(path.state(n)?, w).ok_or_else(missing),
            Source::ByFiber { first, tables } => {
                let i = path.absolute(n) - first;
                if i < 0 || i >= tables.len() as i64 {
                    return Err(LabError::OutsidePath { index: n, lo: *first, hi: first + tables.len() as i64 - 1 });
                }
                tables[i as usize].get(w).copied().ok_or_else(missing)
            }
        }
    }

    pub fn evaluate_point(&self, path: &DriverPath, x: &Point) -> Result<f64> {
        self.evaluate(path, x.anchor, &x.letters)
    }

    /// S_nφ at fiber `anchor`; needs n + depth − 1 letters.
    pub fn birkhoff(&self, path: &DriverPath, anchor: i64, letters: &[Letter], n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        if letters.len() < n + self.depth - 1 {
            return Err(LabError::Depth(format!("Birkhoff sum of length {n} needs {} letters", n + self.depth - 1)));
        }
        (0..n).map(|i| self.evaluate(path, anchor + i as i64, &letters[i..])).sum()
    }

    pub fn birkhoff_point(&self, path: &DriverPath, x: &Point, n: usize) -> Result<f64> {
        self.birkhoff(path, x.anchor, &x.letters, n)
    }

    /// Values of φ at fiber n on every admissible word of length `depth`.
    pub fn values(&self, sys: &Fibered, n: i64) -> Result<(Arc<WordSet>, Vec<f64>)> {
        let ws = sys.words(n, self.depth)?;
        let vals = ws.iter().map(|w| self.evaluate(sys.path(), n, w)).collect::<Result<Vec<_>>>()?;
        Ok((ws, vals))
    }

    /// V_k(φ) at fiber n.
    pub fn variation(&self, sys: &Fibered, n: i64, k: usize) -> Result<f64> {
        if k >= self.depth {
            return Ok(0.0);
        }
        let (ws, vals) = self.values(sys, n)?;
        Ok(variation_from_levels(&level_oscillations(&ws, &vals), k))
    }

    /// κ(θⁿω) = max over index ≤ k < depth of V_k / rᵏ.
    pub fn kappa(&self, sys: &Fibered, n: i64) -> Result<f64> {
        if self.depth <= self.index {
            return Ok(0.0);
        }
        let (ws, vals) = self.values(sys, n)?;
        let osc = level_oscillations(&ws, &vals);
        let k = (self.index..self.depth)
            .map(|k| variation_from_levels(&osc, k) / self.r.powi(k as i32))
            .fold(0.0, f64::max);
        if let Some(bound) = self.kappa_bound {
            if k > bound * (1.0 + 1e-12) {
                return Err(LabError::Misdeclared { fiber: n, observed: k, bound });
            }
            return Ok(bound);
        }
        Ok(k)
    }

    /// Upper bound for κ used in the tail of the distortion series.
    pub fn kappa_max(&self, sys: &Fibered) -> Result<f64> {
        if let Some(b) = self.kappa_bound {
            return Ok(b);
        }
        if self.depth <= self.index {
            return Ok(0.0);
        }
        let (lo, hi) = sys.path().range();
        let (lo, hi) = match self.fiber_range(sys.path()) {
            Some((a, b)) => (lo.max(a), hi.min(b)),
            None => (lo, hi),
        };
        let mut best = 0.0f64;
        let mut seen = HashMap::new();
        for n in lo..=(hi - self.depth as i64 + 1) {
            let key = if self.is_fiberwise() { vec![n as usize] } else { sys.path().window(n, n + self.depth as i64 - 1)? };
            if !self.is_fiberwise() && seen.contains_key(&key) {
                continue;
            }
            let k = self.kappa(sys, n)?;
            seen.insert(key, k);
            best = best.max(k);
        }
        Ok(best)
    }
}

/// osc[i] = max over nodes at level i of the spread between words that first
/// differ at index i. Words must be sorted lexicographically.
pub fn level_oscillations(ws: &WordSet, values: &[f64]) -> Vec<f64> {
    let d = ws.depth();
    let mut osc = vec![0.0f64; d];
    oscillate(ws, values, 0, ws.len(), 0, &mut osc);
    osc
}

fn oscillate(ws: &WordSet, values: &[f64], lo: usize, hi: usize, level: usize, osc: &mut [f64]) -> (f64, f64) {
    if level == ws.depth() || hi - lo == 1 {
        let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &values[lo..hi] {
            mn = mn.min(v);
            mx = mx.max(v);
        }
        return (mn, mx);
    }
    let mut children = Vec::new();
    let mut start = lo;
    while start < hi {
        let a = ws.word(start)[level];
        let mut end = start + 1;
        while end < hi && ws.word(end)[level] == a {
            end += 1;
        }
        children.push(oscillate(ws, values, start, end, level + 1, osc));
        start = end;
    }
    if children.len() > 1 {
        let mut best = 0.0f64;
        for (i, ci) in children.iter().enumerate() {
            for (j, cj) in children.iter().enumerate() {
                if i != j {
                    best = best.max(ci.1 - cj.0);
                }
            }
        }
        osc[level] = osc[level].max(best);
    }
    children.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, c| (acc.0.min(c.0), acc.1.max(c.1)))
}

/// V_k from level oscillations: the largest spread inside a depth-k cylinder.
pub fn variation_from_levels(osc: &[f64], k: usize) -> f64 {
    osc.iter().skip(k).copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionConstants {
    pub fiber: i64,
    pub b: f64,
    pub log_b: f64,
    pub horizon: usize,
    pub tail_bound: f64,
}

/// B_ω = exp(Σ_{k=1..H} κ(θ⁻ᵏω) rᵏ + κ_max r^{H+1}/(1−r)).
pub fn distortion_constant(phi: &Potential, sys: &Fibered, fiber: i64, horizon: usize) -> Result<DistortionConstants> {
    let kmax = phi.kappa_max(sys)?;
    distortion_with_kappa_max(phi, sys, fiber, horizon, kmax)
}

pub fn distortion_with_kappa_max(phi: &Potential, sys: &Fibered, fiber: i64, horizon: usize, kappa_max: f64) -> Result<DistortionConstants> {
    let r = phi.r();
    let mut log_b = 0.0;
    for k in 1..=horizon {
        let kappa = phi.kappa(sys, fiber - k as i64)?;
        log_b += kappa * r.powi(k as i32);
    }
    let tail_bound = kappa_max * r.powi(horizon as i32 + 1) / (1.0 - r);
    log_b += tail_bound;
    Ok(DistortionConstants { fiber, b: log_b.exp(), log_b, horizon, tail_bound })
}

/// log B′ at `fiber`: V_1(φ) one fiber back plus the κ series from two fibers back,
/// the distortion of words of length one.
pub fn index_one_distortion(phi: &Potential, sys: &Fibered, fiber: i64, horizon: usize) -> Result<f64> {
    let r = phi.r();
    let mut log_b = phi.variation(sys, fiber - 1, 1)?;
    for j in 2..=horizon {
        log_b += phi.kappa(sys, fiber - j as i64)? * r.powi(j as i32);
    }
    log_b += phi.kappa_max(sys)? * r.powi(horizon.max(1) as i32 + 1) / (1.0 - r);
    Ok(log_b)
}

/// Distortion horizon limited by the fibers available behind `fiber`.
pub fn available_horizon(phi: &Potential, sys: &Fibered, fiber: i64, wanted: usize) -> usize {
    let (lo, _) = sys.path().range();
    let lo = match phi.fiber_range(sys.path()) {
        Some((a, _)) => lo.max(a),
        None => lo,
    };
    (wanted as i64).min(fiber - lo).max(0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionCheck {
    pub bound: f64,
    pub observed: f64,
}

/// Checks |S_nφ(x) − S_nφ(y)| ≤ r^{m−n} log B_{k+n} for x, y in the cylinder of `a`.
pub fn distortion_check(phi: &Potential, sys: &Fibered, anchor: i64, a: &[Letter], n: usize) -> Result<DistortionCheck> {
    let m = a.len();
    if n + phi.index() > m + 1 {
        return Err(LabError::Depth(format!("n = {n} exceeds m − index + 1 = {}", m + 1 - phi.index())));
    }
    if n == 0 {
        return Ok(DistortionCheck { bound: 0.0, observed: 0.0 });
    }
    let fiber = anchor + n as i64;
    let horizon = available_horizon(phi, sys, fiber, DEFAULT_DISTORTION_HORIZON);
    let b = distortion_constant(phi, sys, fiber, horizon)?;
    let bound = phi.r().powi((m - n) as i32) * b.log_b;
    let len = m.max(n + phi.depth() - 1);
    let ext = sys.words(anchor, len)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in ext.prefix_range(a) {
        let s = phi.birkhoff(sys.path(), anchor, ext.word(i), n)?;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let observed = hi - lo;
    if observed > bound + 1e-12 {
        return Err(LabError::Misdeclared { fiber: anchor, observed, bound });
    }
    Ok(DistortionCheck { bound, observed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::EventSpec;
    use crate::shift::{Bip, FiberStructure};

    fn full(n: u32, len: usize) -> Fibered {
        let fs = FiberStructure::full_shift(n, 1).unwrap();
        Fibered::new(Arc::new(fs), Arc::new(DriverPath::explicit(vec![0; 2 * len + 1], len).unwrap()))
    }

    #[test]
    fn evaluation_examples() {
        let sys = full(2, 10);
        let c = Potential::constant(-0.3, 0.5).unwrap();
        assert_eq!(c.evaluate(sys.path(), 0, &[2, 1]).unwrap(), -0.3);
        let mut t = Table::new();
        for w in [[1, 1], [1, 2], [2, 1], [2, 2]] {
            t.insert(w.to_vec(), if w == [1, 2] { -0.7 } else { 0.1 * w[0] as f64 });
        }
        let phi = Potential::tables(2, 0.5, 2, vec![t]).unwrap();
        assert_eq!(phi.evaluate(sys.path(), 0, &[1, 2, 2, 1]).unwrap(), -0.7);
        assert_eq!(
            phi.evaluate(sys.path(), 3, &[2, 1, 1]).unwrap(),
            phi.evaluate(sys.path(), 3, &[2, 1, 2]).unwrap()
        );
        assert_eq!(phi.birkhoff(sys.path(), 0, &[1, 2, 1], 0).unwrap(), 0.0);
        assert_eq!(c.birkhoff(sys.path(), 0, &[1; 5], 5).unwrap(), 5.0 * -0.3);
        let direct = phi.evaluate(sys.path(), 0, &[1, 2]).unwrap() + phi.evaluate(sys.path(), 1, &[2, 1]).unwrap();
        assert_eq!(phi.birkhoff(sys.path(), 0, &[1, 2, 1], 2).unwrap(), direct);
        assert!(phi.birkhoff(sys.path(), 0, &[1, 2], 2).is_err());
        assert!(phi.evaluate(sys.path(), 0, &[3, 1]).is_err());
    }

    #[test]
    fn variation_examples() {
        let sys = full(2, 10);
        let phi = Potential::function(2, 0.5, 2, |_, w| Some(w[0] as f64 * 0.3 - w[1] as f64)).unwrap();
        assert_eq!(phi.variation(&sys, 0, 2).unwrap(), 0.0);
        assert_eq!(phi.kappa(&sys, 0).unwrap(), 0.0);
        let coord = Potential::function(1, 0.5, 1, |_, w| Some(w[0] as f64)).unwrap();
        assert_eq!(coord.variation(&sys, 0, 1).unwrap(), 0.0);
        assert_eq!(coord.variation(&sys, 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn distortion_examples() {
        let sys = full(2, 300);
        let flat = Potential::function(2, 0.5, 2, |_, w| Some(-(w[0] as f64) - 0.2 * w[1] as f64)).unwrap();
        let d = distortion_constant(&flat, &sys, 0, 128).unwrap();
        assert_eq!(d.b, 1.0);
        // V_2 = 0.25 exactly so κ = 1 on every fiber
        let phi = Potential::function(3, 0.5, 2, |_, w| Some(w[0] as f64 + 0.25 * w[2] as f64)).unwrap();
        assert!((phi.kappa(&sys, 0).unwrap() - 1.0).abs() < 1e-15);
        let d = distortion_constant(&phi, &sys, 0, 200).unwrap();
        assert!((d.log_b - 1.0).abs() < 1e-12, "{}", d.log_b);
        let d50 = distortion_constant(&phi, &sys, 0, 50).unwrap();
        assert!((d50.b - d.b).abs() < 1e-12);
    }

    #[test]
    fn distortion_check_examples() {
        let sys = full(2, 200);
        let phi = Potential::function(3, 0.5, 2, |_, w| Some(w[0] as f64 * 0.1 + 0.2 * (w[1] * w[2]) as f64)).unwrap();
        let c = distortion_check(&phi, &sys, 0, &[1, 2, 1, 2], 3).unwrap();
        assert!(c.observed <= c.bound + 1e-12);
        let z = distortion_check(&phi, &sys, 0, &[1, 2], 0).unwrap();
        assert_eq!((z.bound, z.observed), (0.0, 0.0));
        let lying = phi.clone().with_kappa_bound(0.01);
        assert!(matches!(lying.kappa(&sys, 0), Err(LabError::Misdeclared { .. })));
    }

    #[test]
    fn oscillation_levels_match_pairs() {
        let bip = Bip { letters: [1].into_iter().collect(), omega_bi: EventSpec::Always, omega_bp: EventSpec::Always };
        let fs = FiberStructure::stationary(vec![1, 2], vec![vec![1, 1], vec![1, 0]], 1, bip).unwrap();
        let sys = Fibered::new(Arc::new(fs), Arc::new(DriverPath::explicit(vec![0; 11], 5).unwrap()));
        let ws = sys.words(0, 4).unwrap();
        let vals: Vec<f64> = (0..ws.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let osc = level_oscillations(&ws, &vals);
        for (k, _) in osc.iter().enumerate() {
            let mut brute = 0.0f64;
            for i in 0..ws.len() {
                for j in 0..ws.len() {
                    let (a, b) = (ws.word(i), ws.word(j));
                    if a[..k] == b[..k] {
                        brute = brute.max(vals[i] - vals[j]);
                    }
                }
            }
            assert!((variation_from_levels(&osc, k) - brute).abs() < 1e-15);
        }
    }
}
