//! Transfer operators on cylinder functions and their duals on atomic measures,
//! the RPF solver, pressure, Gibbs verification and the non-stationary check.

mod gibbs;
mod operator;
mod pressure;
mod rpf;
mod sequence;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::potential::level_oscillations;
use crate::shift::{Fibered, Letter, Metric, WordSet};

pub use gibbs::{gibbs_check, GibbsFiber, GibbsOptions, GibbsReport, GibbsViolation};
pub use operator::{
    dual_apply, dual_step, transfer_apply, transfer_power, transfer_power_direct, DEFAULT_MAX_DEPTH,
};
pub use pressure::{gurevich_pressure, PressureReport};
pub use rpf::{integrate_nu, normalize_potential, rpf_solve, RpfDiagnostics, RpfOptions, RpfTriple};
pub use sequence::{invariant_sequence_check, SequenceFiber, SequenceReport, SequenceSpec};

/// A function on a fiber that is constant on cylinders of length `depth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Record", try_from = "Record")]
pub struct CylinderFunction {
    words: Arc<WordSet>,
    values: Vec<f64>,
}

/// Serialized form shared by functions and measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    anchor: i64,
    depth: usize,
    words: Vec<Vec<Letter>>,
    values: Vec<f64>,
}

impl From<CylinderFunction> for Record {
    fn from(f: CylinderFunction) -> Self {
        Record { anchor: f.anchor(), depth: f.depth(), words: f.words.iter().map(<[Letter]>::to_vec).collect(), values: f.values }
    }
}

impl TryFrom<Record> for CylinderFunction {
    type Error = LabError;
    fn try_from(r: Record) -> Result<Self> {
        let ws = WordSet::from_words(r.anchor, r.depth, r.words.clone());
        if ws.len() != r.values.len() || r.words.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::Other("function record: words must be sorted, distinct and match values".into()));
        }
        CylinderFunction::new(Arc::new(ws), r.values)
    }
}

impl CylinderFunction {
    pub fn new(words: Arc<WordSet>, values: Vec<f64>) -> Result<Self> {
        if words.len() != values.len() {
            return Err(LabError::Other(format!("{} values for {} words", values.len(), words.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Other("non-finite function value".into()));
        }
        Ok(Self { words, values })
    }

    pub fn from_fn(sys: &Fibered, anchor: i64, depth: usize, f: impl Fn(&[Letter]) -> f64) -> Result<Self> {
        let ws = sys.words(anchor, depth)?;
        let values = ws.iter().map(f).collect();
        Self::new(ws, values)
    }

    pub fn constant(sys: &Fibered, anchor: i64, depth: usize, c: f64) -> Result<Self> {
        Self::from_fn(sys, anchor, depth, |_| c)
    }

    /// Indicator of the cylinder of `prefix`, represented at depth max(1, |prefix|).
    pub fn indicator(sys: &Fibered, anchor: i64, prefix: &[Letter]) -> Result<Self> {
        Self::from_fn(sys, anchor, prefix.len().max(1), |w| if w.starts_with(prefix) { 1.0 } else { 0.0 })
    }

    pub fn anchor(&self) -> i64 {
        self.words.anchor()
    }

    pub fn depth(&self) -> usize {
        self.words.depth()
    }

    pub fn words(&self) -> &Arc<WordSet> {
        &self.words
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value on the cylinder of the first `depth` letters of `word`.
    pub fn value(&self, word: &[Letter]) -> Option<f64> {
        let d = self.depth();
        if word.len() < d {
            return None;
        }
        self.words.find(&word[..d]).map(|i| self.values[i])
    }

    /// Value at the canonical point of `word`, extending it if it is shorter than the depth.
    pub fn value_at(&self, sys: &Fibered, word: &[Letter]) -> Result<f64> {
        let ext;
        let w = if word.len() < self.depth() {
            ext = sys.canonical_extension(self.anchor(), word, self.depth())?;
            &ext[..]
        } else {
            word
        };
        self.value(w).ok_or_else(|| LabError::Inadmissible { fiber: self.anchor(), word: word.to_vec() })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { words: self.words.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination with a function on the same word set.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.words != other.words {
            return Err(LabError::Depth("functions live on different word sets".into()));
        }
        Ok(Self { words: self.words.clone(), values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    /// max |f − g| over the finer of the two representations.
    pub fn sup_distance(&self, sys: &Fibered, other: &Self) -> Result<f64> {
        let d = self.depth().max(other.depth());
        let (a, b) = (self.refine(sys, d)?, other.refine(sys, d)?);
        Ok(a.values.iter().zip(&b.values).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }

    /// The same function represented on cylinders of length `depth` ≥ current depth.
    pub fn refine(&self, sys: &Fibered, depth: usize) -> Result<Self> {
        if depth == self.depth() {
            return Ok(self.clone());
        }
        if depth < self.depth() {
            return Err(LabError::Depth(format!("cannot refine depth {} to {depth}", self.depth())));
        }
        let ws = sys.words(self.anchor(), depth)?;
        let values = ws
            .iter()
            .map(|w| self.value(w).ok_or_else(|| LabError::Inadmissible { fiber: self.anchor(), word: w.to_vec() }))
            .collect::<Result<_>>()?;
        Self::new(ws, values)
    }

    /// Lipschitz constant sup |f(x) − f(y)| / d(x, y) over the representatives.
    pub fn lipschitz(&self, metric: Metric) -> f64 {
        level_oscillations(&self.words, &self.values)
            .iter()
            .enumerate()
            .map(|(i, &o)| o / metric.level(i))
            .fold(0.0, f64::max)
    }

    /// ‖f‖∞ + D(f).
    pub fn lipschitz_norm(&self, metric: Metric) -> f64 {
        self.sup_norm() + self.lipschitz(metric)
    }
}

/// A fiberwise observable: a function of the driver state and the first `depth` letters.
#[derive(Clone)]
pub struct Observable {
    pub depth: usize,
    pub f: Arc<dyn Fn(usize, &[Letter]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observable(depth {})", self.depth)
    }
}

impl Observable {
    pub fn new(depth: usize, f: impl Fn(usize, &[Letter]) -> f64 + Send + Sync + 'static) -> Self {
        Self { depth, f: Arc::new(f) }
    }

    /// Indicator of the letter `a` in coordinate 0.
    pub fn letter(a: Letter) -> Self {
        Self::new(1, move |_, w| if w[0] == a { 1.0 } else { 0.0 })
    }

    pub fn at(&self, sys: &Fibered, anchor: i64) -> Result<CylinderFunction> {
        let s = sys.state(anchor)?;
        CylinderFunction::from_fn(sys, anchor, self.depth, |w| (self.f)(s, w))
    }
}

/// A finite measure on a fiber with atoms at canonical points of depth-`depth` words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Record", try_from = "Record")]
pub struct AtomicMeasure {
    words: Arc<WordSet>,
    weights: Vec<f64>,
}

impl From<AtomicMeasure> for Record {
    fn from(m: AtomicMeasure) -> Self {
        Record { anchor: m.anchor(), depth: m.depth(), words: m.words.iter().map(<[Letter]>::to_vec).collect(), values: m.weights }
    }
}

impl TryFrom<Record> for AtomicMeasure {
    type Error = LabError;
    fn try_from(r: Record) -> Result<Self> {
        Self::from_pairs(r.anchor, r.depth, r.words.into_iter().zip(r.values).collect())
    }
}

impl AtomicMeasure {
    pub fn new(words: Arc<WordSet>, weights: Vec<f64>) -> Result<Self> {
        if words.len() != weights.len() {
            return Err(LabError::Other(format!("{} weights for {} atoms", weights.len(), words.len())));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LabError::Other("weights must be finite and nonnegative".into()));
        }
        Ok(Self { words, weights })
    }

    /// Merges repeated words by summing their weights.
    pub fn from_pairs(anchor: i64, depth: usize, mut pairs: Vec<(Vec<Letter>, f64)>) -> Result<Self> {
        if pairs.iter().any(|(w, _)| w.len() != depth) {
            return Err(LabError::Depth(format!("atoms must have length {depth}")));
        }
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let mut words: Vec<Vec<Letter>> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (w, x) in pairs {
            if words.last() == Some(&w) {
                *weights.last_mut().expect("paired with words") += x;
            } else {
                words.push(w);
                weights.push(x);
            }
        }
        Self::new(Arc::new(WordSet::from_words(anchor, depth, words)), weights)
    }

    pub fn dirac(anchor: i64, word: Vec<Letter>) -> Result<Self> {
        let d = word.len();
        Self::from_pairs(anchor, d, vec![(word, 1.0)])
    }

    pub fn uniform(sys: &Fibered, anchor: i64, depth: usize) -> Result<Self> {
        let ws = sys.words(anchor, depth)?;
        let n = ws.len();
        Self::new(ws, vec![1.0 / n as f64; n])
    }

    pub fn anchor(&self) -> i64 {
        self.words.anchor()
    }

    pub fn depth(&self) -> usize {
        self.words.depth()
    }

    pub fn words(&self) -> &Arc<WordSet> {
        &self.words
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[Letter], f64)> + '_ {
        self.words.iter().zip(self.weights.iter().copied())
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.words.clone(), self.weights.iter().map(|w| w * c).collect())
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(LabError::MassMismatch(m, 1.0));
        }
        self.scaled(1.0 / m)
    }

    /// Mass of the cylinder of `prefix` (length at most the depth).
    pub fn cylinder_mass(&self, prefix: &[Letter]) -> f64 {
        self.words.prefix_range(prefix).map(|i| self.weights[i]).sum()
    }

    /// Sums weights onto the prefixes of length `depth`.
    pub fn coarsen(&self, depth: usize) -> Result<Self> {
        if depth > self.depth() || depth == 0 {
            return Err(LabError::Depth(format!("cannot coarsen depth {} to {depth}", self.depth())));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        let pairs = self.atoms().map(|(w, x)| (w[..depth].to_vec(), x)).collect();
        Self::from_pairs(self.anchor(), depth, pairs)
    }

    /// Re-expresses the atoms as words of length `depth` ≥ current depth by
    /// canonical extension; the underlying points are unchanged.
    pub fn lift(&self, sys: &Fibered, depth: usize) -> Result<Self> {
        if depth < self.depth() {
            return Err(LabError::Depth(format!("cannot lift depth {} to {depth}", self.depth())));
        }
        if depth == self.depth() {
            return Ok(self.clone());
        }
        let pairs = self
            .atoms()
            .map(|(w, x)| Ok((sys.canonical_extension(self.anchor(), w, depth)?, x)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_pairs(self.anchor(), depth, pairs)
    }

    /// The same measure supported on every admissible word of its depth.
    pub fn densify(&self, sys: &Fibered) -> Result<Self> {
        let ws = sys.words(self.anchor(), self.depth())?;
        let mut weights = vec![0.0; ws.len()];
        for (w, x) in self.atoms() {
            let i = ws.find(w).ok_or_else(|| LabError::Inadmissible { fiber: self.anchor(), word: w.to_vec() })?;
            weights[i] += x;
        }
        Self::new(ws, weights)
    }

    /// ∫ f dμ with f evaluated at the canonical point of every atom.
    pub fn integrate(&self, sys: &Fibered, f: &CylinderFunction) -> Result<f64> {
        if f.anchor() != self.anchor() {
            return Err(LabError::AnchorMismatch(f.anchor(), self.anchor()));
        }
        let mut s = 0.0;
        for (w, x) in self.atoms() {
            if x != 0.0 {
                s += x * f.value_at(sys, w)?;
            }
        }
        Ok(s)
    }

    /// Densified weight vector difference max |μ(w) − ν(w)| at a common depth.
    pub fn sup_distance(&self, sys: &Fibered, other: &Self) -> Result<f64> {
        let d = self.depth().min(other.depth());
        let (a, b) = (self.coarsen(d)?.densify(sys)?, other.coarsen(d)?.densify(sys)?);
        Ok(a.weights.iter().zip(&b.weights).fold(0.0, |m, (x, y)| m.max((x - y).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::DriverPath;
    use crate::shift::FiberStructure;

    fn full(n: u32) -> Fibered {
        Fibered::new(Arc::new(FiberStructure::full_shift(n, 1).unwrap()), Arc::new(DriverPath::explicit(vec![0; 21], 10).unwrap()))
    }

    #[test]
    fn lipschitz_matches_pairwise() {
        let sys = full(3);
        let f = CylinderFunction::from_fn(&sys, 0, 3, |w| (w[0] * 7 + w[1] * 3 + w[2]) as f64 % 5.0).unwrap();
        let m = Metric::adjusted(0.5, 2.5).unwrap();
        let mut brute = 0.0f64;
        for a in f.words().iter() {
            for b in f.words().iter() {
                if a != b {
                    brute = brute.max((f.value(a).unwrap() - f.value(b).unwrap()).abs() / m.words(a, b));
                }
            }
        }
        assert!((f.lipschitz(m) - brute).abs() < 1e-14);
    }

    #[test]
    fn measure_bookkeeping() {
        let sys = full(2);
        let mu = AtomicMeasure::from_pairs(0, 2, vec![(vec![1, 2], 0.25), (vec![2, 1], 0.5), (vec![1, 2], 0.25)]).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.cylinder_mass(&[1]), 0.5);
        let c = mu.coarsen(1).unwrap();
        assert_eq!(c.weights(), &[0.5, 0.5]);
        let f = CylinderFunction::from_fn(&sys, 0, 3, |w| w.iter().sum::<u32>() as f64).unwrap();
        // atoms sit at 1,2,1 and 2,1,1
        assert_eq!(mu.integrate(&sys, &f).unwrap(), 0.5 * 4.0 + 0.5 * 4.0);
        let json = serde_json::to_string(&mu).unwrap();
        let back: AtomicMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mu);
        let fj = serde_json::to_string(&f).unwrap();
        let fb: CylinderFunction = serde_json::from_str(&fj).unwrap();
        assert_eq!(fb, f);
    }
}
