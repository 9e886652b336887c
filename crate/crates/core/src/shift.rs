//! Fibered shift spaces: per-state alphabets and transition matrices, admissible
//! words, canonical points and the metrics d_r and d̄.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::sync::{Arc, Mutex};

use crate::driver::{DriverPath, DriverSystem, EventSpec};
use crate::error::{LabError, Result};

pub type Letter = u32;

/// Alphabet and 0/1 matrix for one driver state. Rows follow the alphabet,
/// columns follow the global letter universe.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpec {
    alphabet: Vec<Letter>,
    rows: Vec<Vec<u8>>,
}

/// Big images and preimages data: the letter set I and the base events.
#[derive(Debug, Clone)]
pub struct Bip {
    pub letters: BTreeSet<Letter>,
    pub omega_bi: EventSpec,
    pub omega_bp: EventSpec,
}

#[derive(Debug, Clone)]
pub struct FiberStructure {
    universe: Vec<Letter>,
    fibers: Vec<FiberSpec>,
    bip: Bip,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub states: (usize, usize),
    pub message: String,
}

impl FiberStructure {
    /// `fibers[s] = (alphabet, matrix)` with matrix columns indexed by `universe`.
    pub fn new(universe: Vec<Letter>, fibers: Vec<(Vec<Letter>, Vec<Vec<u8>>)>, bip: Bip) -> Result<Self> {
        let mut uni = universe.clone();
        uni.sort_unstable();
        uni.dedup();
        if uni != universe {
            return Err(LabError::InvalidStructure("universe must be sorted and distinct".into()));
        }
        if fibers.is_empty() {
            return Err(LabError::InvalidStructure("no fibers declared".into()));
        }
        let mut specs = Vec::with_capacity(fibers.len());
        for (s, (alphabet, rows)) in fibers.into_iter().enumerate() {
            if alphabet.is_empty() {
                return Err(LabError::InvalidStructure(format!("state {s}: empty alphabet")));
            }
            let mut sorted = alphabet.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted != alphabet {
                return Err(LabError::InvalidStructure(format!("state {s}: alphabet must be sorted and distinct")));
            }
            if alphabet.iter().any(|a| universe.binary_search(a).is_err()) {
                return Err(LabError::InvalidStructure(format!("state {s}: letter outside the universe")));
            }
            if rows.len() != alphabet.len() || rows.iter().any(|r| r.len() != universe.len()) {
                return Err(LabError::InvalidStructure(format!(
                    "state {s}: matrix must be {}x{}",
                    alphabet.len(),
                    universe.len()
                )));
            }
            if rows.iter().flatten().any(|&e| e > 1) {
                return Err(LabError::InvalidStructure(format!("state {s}: matrix entries must be 0 or 1")));
            }
            specs.push(FiberSpec { alphabet, rows });
        }
        Ok(Self { universe, fibers: specs, bip })
    }

    /// Same alphabet and matrix for every one of `states` driver states.
    pub fn stationary(alphabet: Vec<Letter>, matrix: Vec<Vec<u8>>, states: usize, bip: Bip) -> Result<Self> {
        let fibers = vec![(alphabet.clone(), matrix); states];
        Self::new(alphabet, fibers, bip)
    }

    /// Full shift on letters `1..=n` with I = all letters and trivial base events.
    pub fn full_shift(n: u32, states: usize) -> Result<Self> {
        let alphabet: Vec<Letter> = (1..=n).collect();
        let matrix = vec![vec![1u8; n as usize]; n as usize];
        let bip = Bip { letters: alphabet.iter().copied().collect(), omega_bi: EventSpec::Always, omega_bp: EventSpec::Always };
        Self::stationary(alphabet, matrix, states, bip)
    }

    pub fn universe(&self) -> &[Letter] {
        &self.universe
    }

    pub fn states(&self) -> usize {
        self.fibers.len()
    }

    pub fn bip(&self) -> &Bip {
        &self.bip
    }

    pub fn with_bip(mut self, bip: Bip) -> Self {
        self.bip = bip;
        self
    }

    pub fn alphabet(&self, state: usize) -> &[Letter] {
        &self.fibers[state].alphabet
    }

    /// Matrix entry for `a` in the fiber of `state` followed by `b` in the next fiber.
    pub fn entry(&self, state: usize, a: Letter, b: Letter) -> bool {
        let f = &self.fibers[state];
        match (f.alphabet.binary_search(&a), self.universe.binary_search(&b)) {
            (Ok(i), Ok(j)) => f.rows[i][j] == 1,
            _ => false,
        }
    }

    /// Structural checks for one pair of consecutive driver states.
    pub fn check_pair(&self, s: usize, t: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let (wa, wb) = (self.alphabet(s), self.alphabet(t));
        let mut push = |message: String| out.push(Violation { states: (s, t), message });
        for (i, &a) in wa.iter().enumerate() {
            if !wb.iter().any(|&b| self.entry(s, a, b)) {
                push(format!("state {s}: row {i} (letter {a}) has no admissible successor in state {t}"));
            }
        }
        for &b in wb {
            if !wa.iter().any(|&a| self.entry(s, a, b)) {
                push(format!("state {s}: column for letter {b} has no admissible predecessor"));
            }
        }
        let ia: Vec<Letter> = wa.iter().copied().filter(|a| self.bip.letters.contains(a)).collect();
        let ib: Vec<Letter> = wb.iter().copied().filter(|b| self.bip.letters.contains(b)).collect();
        if self.bip.omega_bp.holds_for_state(t) == Some(true) {
            for &b in wb {
                if !ia.iter().any(|&a| self.entry(s, a, b)) {
                    push(format!("big preimages: letter {b} of state {t} has no predecessor in I (from state {s})"));
                }
            }
        }
        if self.bip.omega_bi.holds_for_state(t) == Some(true) {
            for &a in wa {
                if !ib.iter().any(|&b| self.entry(s, a, b)) {
                    push(format!("big images: letter {a} of state {s} has no successor in I (state {t})"));
                }
            }
        }
        out
    }

    /// All violations over the positive-probability transitions of `system`.
    pub fn validate(&self, system: &DriverSystem) -> Vec<Violation> {
        if system.len() != self.states() {
            return vec![Violation {
                states: (0, 0),
                message: format!("{} driver states but {} fibers", system.len(), self.states()),
            }];
        }
        system.admissible_pairs().into_iter().flat_map(|(s, t)| self.check_pair(s, t)).collect()
    }

    /// Violations along the consecutive states of a path window.
    pub fn validate_along(&self, path: &DriverPath, lo: i64, hi: i64) -> Result<Vec<Violation>> {
        let mut seen = BTreeSet::new();
        for n in lo..hi {
            seen.insert((path.state(n)?, path.state(n + 1)?));
        }
        Ok(seen.into_iter().flat_map(|(s, t)| self.check_pair(s, t)).collect())
    }
}

/// An admissible word anchored at a fiber.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    pub anchor: i64,
    pub letters: Vec<Letter>,
}

impl Word {
    pub fn new(anchor: i64, letters: Vec<Letter>) -> Self {
        Self { anchor, letters }
    }
}

/// A point given by an admissible head followed by the canonical tail,
/// materialized to `letters.len()` symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Point {
    pub anchor: i64,
    pub letters: Vec<Letter>,
    pub head: usize,
}

/// Lexicographically sorted set of equal-length words anchored at one fiber.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSet {
    anchor: i64,
    depth: usize,
    letters: Vec<Letter>,
}

impl WordSet {
    /// Builds a set from arbitrary words of length `depth`; sorts and dedups.
    pub fn from_words(anchor: i64, depth: usize, mut words: Vec<Vec<Letter>>) -> Self {
        words.sort_unstable();
        words.dedup();
        debug_assert!(words.iter().all(|w| w.len() == depth));
        Self { anchor, depth, letters: words.concat() }
    }

    pub fn anchor(&self) -> i64 {
        self.anchor
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        if self.depth == 0 {
            0
        } else {
            self.letters.len() / self.depth
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn word(&self, i: usize) -> &[Letter] {
        &self.letters[i * self.depth..(i + 1) * self.depth]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[Letter]> + '_ {
        self.letters.chunks_exact(self.depth.max(1))
    }

    pub fn find(&self, w: &[Letter]) -> Option<usize> {
        if w.len() != self.depth {
            return None;
        }
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.word(mid).cmp(w) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Indices of the words starting with `prefix` (contiguous by sorting).
    pub fn prefix_range(&self, prefix: &[Letter]) -> Range<usize> {
        let k = prefix.len().min(self.depth);
        let p = &prefix[..k];
        let lower = self.partition(|w| &w[..k] < p);
        let upper = self.partition(|w| &w[..k] <= p);
        lower..upper
    }

    fn partition(&self, pred: impl Fn(&[Letter]) -> bool) -> usize {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if pred(self.word(mid)) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

/// d_r or d̄ = min(1, α d_r) on points of one fiber.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metric {
    pub r: f64,
    pub alpha: f64,
}

impl Metric {
    pub fn raw(r: f64) -> Result<Self> {
        Self::adjusted(r, 1.0)
    }

    pub fn adjusted(r: f64, alpha: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(LabError::Metric(format!("r = {r} outside (0,1)")));
        }
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(LabError::Metric(format!("alpha = {alpha} below 1")));
        }
        Ok(Self { r, alpha })
    }

    /// Distance between points first differing at index `i`.
    pub fn level(&self, i: usize) -> f64 {
        (self.alpha * self.r.powi(i as i32)).min(1.0)
    }

    /// Distance between canonical representatives of two equal-length words.
    pub fn words(&self, a: &[Letter], b: &[Letter]) -> f64 {
        match a.iter().zip(b).position(|(x, y)| x != y) {
            Some(i) => self.level(i),
            None => 0.0,
        }
    }
}

/// Metric data shared by a whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSpec {
    pub r: f64,
    pub beta: f64,
}

impl MetricSpec {
    pub fn new(r: f64, beta: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(LabError::Metric(format!("r = {r} outside (0,1)")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(LabError::Metric(format!("beta = {beta} outside (0,1)")));
        }
        Ok(Self { r, beta })
    }

    /// d̄ for a fiber with distortion constant `b`.
    pub fn adjusted(&self, b: f64) -> Result<Metric> {
        Metric::adjusted(self.r, b / self.beta)
    }
}

fn first_difference(x: &Point, y: &Point) -> Result<Option<usize>> {
    if x.anchor != y.anchor {
        return Err(LabError::AnchorMismatch(x.anchor, y.anchor));
    }
    let common = x.letters.len().min(y.letters.len());
    if let Some(i) = (0..common).find(|&i| x.letters[i] != y.letters[i]) {
        return Ok(Some(i));
    }
    if common >= x.head.max(y.head) {
        Ok(None)
    } else {
        Err(LabError::Depth("points not materialized past their heads".into()))
    }
}

pub fn shift_metric(x: &Point, y: &Point, r: f64) -> Result<f64> {
    let m = Metric::raw(r)?;
    Ok(first_difference(x, y)?.map_or(0.0, |i| m.level(i)))
}

pub fn adjusted_metric(x: &Point, y: &Point, metric: Metric) -> Result<f64> {
    let m = Metric::adjusted(metric.r, metric.alpha)?;
    Ok(first_difference(x, y)?.map_or(0.0, |i| m.level(i)))
}

type WordCache = Arc<Mutex<HashMap<(i64, usize), Arc<WordSet>>>>;

/// A fiber structure realized along one driver path.
#[derive(Debug, Clone)]
pub struct Fibered {
    structure: Arc<FiberStructure>,
    path: Arc<DriverPath>,
    cache: WordCache,
}

impl Fibered {
    pub fn new(structure: Arc<FiberStructure>, path: Arc<DriverPath>) -> Self {
        Self { structure, path, cache: Arc::default() }
    }

    pub fn structure(&self) -> &FiberStructure {
        &self.structure
    }

    pub fn structure_arc(&self) -> &Arc<FiberStructure> {
        &self.structure
    }

    pub fn path(&self) -> &DriverPath {
        &self.path
    }

    pub fn path_arc(&self) -> &Arc<DriverPath> {
        &self.path
    }

    pub fn state(&self, n: i64) -> Result<usize> {
        self.path.state(n)
    }

    pub fn alphabet(&self, n: i64) -> Result<&[Letter]> {
        Ok(self.structure.alphabet(self.path.state(n)?))
    }

    /// Whether `a` at fiber n may be followed by `b` at fiber n+1.
    pub fn allowed(&self, n: i64, a: Letter, b: Letter) -> Result<bool> {
        let next = self.alphabet(n + 1)?;
        Ok(next.binary_search(&b).is_ok() && self.structure.entry(self.path.state(n)?, a, b))
    }

    pub fn successors(&self, n: i64, a: Letter) -> Result<Vec<Letter>> {
        let s = self.path.state(n)?;
        Ok(self.alphabet(n + 1)?.iter().copied().filter(|&b| self.structure.entry(s, a, b)).collect())
    }

    pub fn is_admissible(&self, anchor: i64, word: &[Letter]) -> Result<bool> {
        match word.first() {
            None => Ok(true),
            Some(a) if self.alphabet(anchor)?.binary_search(a).is_err() => Ok(false),
            Some(_) => {
                for (i, pair) in word.windows(2).enumerate() {
                    if !self.allowed(anchor + i as i64, pair[0], pair[1])? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Wⁿ at fiber `start`, cached.
    pub fn words(&self, start: i64, n: usize) -> Result<Arc<WordSet>> {
        if n == 0 {
            return Err(LabError::Depth("word length must be positive".into()));
        }
        if let Some(ws) = self.cache.lock().expect("word cache").get(&(start, n)) {
            return Ok(ws.clone());
        }
        let mut letters = Vec::new();
        let mut stack: Vec<Letter> = Vec::with_capacity(n);
        self.enumerate(start, n, &mut stack, &mut letters)?;
        if letters.is_empty() {
            return Err(LabError::InvalidStructure(format!("no admissible words of length {n} at fiber {start}")));
        }
        let ws = Arc::new(WordSet { anchor: start, depth: n, letters });
        self.cache.lock().expect("word cache").insert((start, n), ws.clone());
        Ok(ws)
    }

    fn enumerate(&self, start: i64, n: usize, stack: &mut Vec<Letter>, out: &mut Vec<Letter>) -> Result<()> {
        if stack.len() == n {
            out.extend_from_slice(stack);
            return Ok(());
        }
        let next: Vec<Letter> = match stack.last() {
            None => self.alphabet(start)?.to_vec(),
            Some(&a) => self.successors(start + stack.len() as i64 - 1, a)?,
        };
        for b in next {
            stack.push(b);
            self.enumerate(start, n, stack, out)?;
            stack.pop();
        }
        Ok(())
    }

    /// Extends an admissible word to length `len` by minimal admissible letters.
    pub fn canonical_extension(&self, anchor: i64, word: &[Letter], len: usize) -> Result<Vec<Letter>> {
        let mut out = word.to_vec();
        if out.is_empty() {
            out.push(*self.alphabet(anchor)?.first().expect("alphabets are nonempty"));
        }
        while out.len() < len {
            let i = out.len() - 1;
            let a = out[i];
            let next = self
                .successors(anchor + i as i64, a)?
                .into_iter()
                .next()
                .ok_or_else(|| LabError::Inadmissible { fiber: anchor + i as i64, word: vec![a] })?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn canonical_representative(&self, word: &Word, depth: usize) -> Result<Point> {
        if !self.is_admissible(word.anchor, &word.letters)? {
            return Err(LabError::Inadmissible { fiber: word.anchor, word: word.letters.clone() });
        }
        let len = depth.max(word.letters.len());
        Ok(Point {
            anchor: word.anchor,
            letters: self.canonical_extension(word.anchor, &word.letters, len)?,
            head: word.letters.len(),
        })
    }

    /// I ∩ W¹ at fiber n.
    pub fn bip_letters(&self, n: i64) -> Result<Vec<Letter>> {
        let letters = &self.structure.bip.letters;
        Ok(self.alphabet(n)?.iter().copied().filter(|a| letters.contains(a)).collect())
    }

    pub fn in_bp(&self, n: i64) -> Result<bool> {
        self.structure.bip.omega_bp.holds(&self.path, n)
    }

    pub fn in_bi(&self, n: i64) -> Result<bool> {
        self.structure.bip.omega_bi.holds(&self.path, n)
    }
}

pub fn admissible_words(sys: &Fibered, start: i64, n: usize) -> Result<Arc<WordSet>> {
    sys.words(start, n)
}

pub fn canonical_representative(sys: &Fibered, word: &Word, depth: usize) -> Result<Point> {
    sys.canonical_representative(word, depth)
}
