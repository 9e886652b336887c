//! Finite-state ergodic driver: the base system selecting which fiber comes next.
//!
//! Paths are sampled counter-style: the uniform variate used at absolute index
//! `i` depends only on `(seed, i)`, so extending a window never changes the
//! states already drawn.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LabError, Result};

pub const DEFAULT_MAX_RADIUS: u64 = 1 << 16;
const LAW_TOL: f64 = 1e-12;

/// Maximum window radius, overridable through `RR_MAX_WINDOW`.
pub fn max_radius_from_env() -> u64 {
    std::env::var("RR_MAX_WINDOW")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_RADIUS)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriverLaw {
    Iid(Vec<f64>),
    Markov(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverSystem {
    labels: Vec<String>,
    law: DriverLaw,
    stationary: Vec<f64>,
    reversed: Option<Vec<Vec<f64>>>,
}

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(LabError::InvalidLaw(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > LAW_TOL {
        return Err(LabError::InvalidLaw(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn irreducible(p: &[Vec<f64>]) -> bool {
    let n = p.len();
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if p[i][j] > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    })
}

fn stationary_of(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    // pi (P - I) = 0 with the last equation replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..n {
        a[(n - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| LabError::InvalidLaw("singular stationary system".into()))?;
    Ok(pi.iter().map(|&x| x.max(0.0)).collect())
}

impl DriverSystem {
    pub fn new(labels: Vec<String>, law: DriverLaw) -> Result<Self> {
        if labels.is_empty() {
            return Err(LabError::InvalidLaw("empty state set".into()));
        }
        let n = labels.len();
        let (stationary, reversed) = match &law {
            DriverLaw::Iid(w) => {
                if w.len() != n {
                    return Err(LabError::InvalidLaw(format!("{} weights for {n} states", w.len())));
                }
                check_distribution("weights", w)?;
                (w.clone(), None)
            }
            DriverLaw::Markov(p) => {
                if p.len() != n || p.iter().any(|row| row.len() != n) {
                    return Err(LabError::InvalidLaw(format!("transition matrix is not {n}x{n}")));
                }
                for (i, row) in p.iter().enumerate() {
                    check_distribution(&format!("row {i}"), row)?;
                }
                if !irreducible(p) {
                    return Err(LabError::InvalidLaw("transition matrix is not irreducible".into()));
                }
                let pi = stationary_of(p)?;
                let rev = (0..n)
                    .map(|i| (0..n).map(|j| pi[j] * p[j][i] / pi[i]).collect())
                    .collect();
                (pi, Some(rev))
            }
        };
        Ok(Self { labels, law, stationary, reversed })
    }

    pub fn iid(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| i.to_string()).collect();
        Self::new(labels, DriverLaw::Iid(weights))
    }

    pub fn markov(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..matrix.len()).map(|i| i.to_string()).collect();
        Self::new(labels, DriverLaw::Markov(matrix))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn law(&self) -> &DriverLaw {
        &self.law
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// Probability of moving from state `i` to state `j`.
    pub fn transition(&self, i: usize, j: usize) -> f64 {
        match &self.law {
            DriverLaw::Iid(w) => w[j],
            DriverLaw::Markov(p) => p[i][j],
        }
    }

    /// Pairs of consecutive states with positive probability.
    pub fn admissible_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            if self.stationary[i] <= 0.0 {
                continue;
            }
            for j in 0..n {
                if self.transition(i, j) > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn draw(&self, seed: u64, index: i64, neighbour: Option<usize>) -> usize {
        let u = uniform(seed, index);
        match (&self.law, neighbour) {
            (DriverLaw::Iid(w), _) => inverse_cdf(w, u),
            (DriverLaw::Markov(_), None) => inverse_cdf(&self.stationary, u),
            (DriverLaw::Markov(p), Some(prev)) if index > 0 => inverse_cdf(&p[prev], u),
            (DriverLaw::Markov(_), Some(next)) => {
                let rev = self.reversed.as_ref().expect("markov law has a reversal");
                inverse_cdf(&rev[next], u)
            }
        }
    }
}

fn zigzag(i: i64) -> u64 {
    ((i << 1) ^ (i >> 63)) as u64
}

fn uniform(seed: u64, index: i64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(zigzag(index));
    rng.gen::<f64>()
}

fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &pj) in p.iter().enumerate() {
        if pj <= 0.0 {
            continue;
        }
        acc += pj;
        last = j;
        if u < acc {
            return j;
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Sampled { system: Arc<DriverSystem>, seed: u64 },
    Explicit,
}

/// A finite window of a bi-infinite driver path. Relative index 0 is ω.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    source: Source,
    origin: i64,
    lo: i64,
    states: Vec<usize>,
    max_radius: u64,
}

pub fn sample_path(system: Arc<DriverSystem>, radius: u64, seed: u64) -> Result<DriverPath> {
    DriverPath::sample(system, radius, seed, max_radius_from_env())
}

impl DriverPath {
    pub fn sample(system: Arc<DriverSystem>, radius: u64, seed: u64, max_radius: u64) -> Result<Self> {
        if radius == 0 {
            return Err(LabError::InvalidLaw("radius must be at least 1".into()));
        }
        let mut path = Self {
            source: Source::Sampled { system, seed },
            origin: 0,
            lo: 0,
            states: Vec::new(),
            max_radius,
        };
        let first = path.generate(0, None);
        path.states.push(first);
        path.ensure(-(radius as i64), radius as i64)?;
        Ok(path)
    }

    /// A fixed sequence of states; `origin` is the position of relative index 0.
    pub fn explicit(states: Vec<usize>, origin: usize) -> Result<Self> {
        if origin >= states.len() {
            return Err(LabError::InvalidLaw("origin outside explicit path".into()));
        }
        Ok(Self {
            source: Source::Explicit,
            origin: 0,
            lo: -(origin as i64),
            max_radius: states.len() as u64,
            states,
        })
    }

    pub fn system(&self) -> Option<&Arc<DriverSystem>> {
        match &self.source {
            Source::Sampled { system, .. } => Some(system),
            Source::Explicit => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.source {
            Source::Sampled { seed, .. } => Some(*seed),
            Source::Explicit => None,
        }
    }

    pub fn max_radius(&self) -> u64 {
        self.max_radius
    }

    fn generate(&self, abs: i64, neighbour: Option<usize>) -> usize {
        match &self.source {
            Source::Sampled { system, seed } => system.draw(*seed, abs, neighbour),
            Source::Explicit => unreachable!("explicit paths are never extended"),
        }
    }

    fn hi(&self) -> i64 {
        self.lo + self.states.len() as i64 - 1
    }

    /// Absolute index of relative index `n`.
    pub fn absolute(&self, n: i64) -> i64 {
        self.origin + n
    }

    /// Relative window currently materialized.
    pub fn range(&self) -> (i64, i64) {
        (self.lo - self.origin, self.hi() - self.origin)
    }

    /// Extend the materialized window to cover relative indices `[lo, hi]`.
    pub fn ensure(&mut self, lo: i64, hi: i64) -> Result<()> {
        let (alo, ahi) = (self.origin + lo, self.origin + hi);
        if let Source::Explicit = self.source {
            if alo < self.lo || ahi > self.hi() {
                let bad = if alo < self.lo { alo } else { ahi };
                return Err(LabError::OutsidePath { index: bad, lo: self.lo, hi: self.hi() });
            }
            return Ok(());
        }
        for bound in [alo, ahi] {
            if bound.unsigned_abs() > self.max_radius {
                return Err(LabError::WindowExceeded { index: bound, max_radius: self.max_radius });
            }
        }
        while self.hi() < ahi {
            let next = self.hi() + 1;
            let prev = *self.states.last().expect("window is never empty");
            let s = self.generate(next, Some(prev));
            self.states.push(s);
        }
        if self.lo > alo {
            let mut front = Vec::with_capacity((self.lo - alo) as usize);
            let mut next_state = self.states[0];
            let mut i = self.lo - 1;
            while i >= alo {
                let s = self.generate(i, Some(next_state));
                front.push(s);
                next_state = s;
                i -= 1;
            }
            front.reverse();
            front.extend_from_slice(&self.states);
            self.states = front;
            self.lo = alo;
        }
        Ok(())
    }

    /// Driver state at θⁿω.
    pub fn state(&self, n: i64) -> Result<usize> {
        let abs = self.origin + n;
        if abs < self.lo || abs > self.hi() {
            return Err(match self.source {
                Source::Explicit => LabError::OutsidePath { index: abs, lo: self.lo, hi: self.hi() },
                Source::Sampled { .. } => LabError::WindowExceeded {
                    index: abs,
                    max_radius: (self.hi() - self.origin).min(self.origin - self.lo).max(0) as u64,
                },
            });
        }
        Ok(self.states[(abs - self.lo) as usize])
    }

    /// States at relative indices `lo..=hi`.
    pub fn window(&self, lo: i64, hi: i64) -> Result<Vec<usize>> {
        (lo..=hi).map(|n| self.state(n)).collect()
    }

    /// θᵏ applied to the path: the result at index j is the input at j + k.
    pub fn shifted(&self, k: i64) -> Result<Self> {
        let (lo, hi) = self.range();
        let mut out = self.clone();
        if let Source::Sampled { .. } = self.source {
            out.ensure(lo.min(lo + k), hi.max(hi + k))?;
        } else if self.origin + k < self.lo || self.origin + k > self.hi() {
            return Err(LabError::OutsidePath { index: self.origin + k, lo: self.lo, hi: self.hi() });
        }
        out.origin += k;
        Ok(out)
    }
}

pub fn shift_path(path: &DriverPath, k: i64) -> Result<DriverPath> {
    path.shifted(k)
}

type WindowPredicate = Arc<dyn Fn(&[usize]) -> bool + Send + Sync>;

/// A base event decided from a bounded window of driver states.
#[derive(Clone)]
pub enum EventSpec {
    Always,
    Never,
    StateIn(BTreeSet<usize>),
    /// Predicate over the states at offsets `-radius..=radius`.
    Window { radius: u64, predicate: WindowPredicate },
    /// Precomputed membership by absolute index (events built from fiber constants).
    Marked(Arc<BTreeSet<i64>>),
}

impl fmt::Debug for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Always => write!(f, "Always"),
            Self::Never => write!(f, "Never"),
            Self::StateIn(s) => write!(f, "StateIn({s:?})"),
            Self::Window { radius, .. } => write!(f, "Window(radius {radius})"),
            Self::Marked(m) => write!(f, "Marked({} indices)", m.len()),
        }
    }
}

impl EventSpec {
    pub fn states<I: IntoIterator<Item = usize>>(states: I) -> Self {
        Self::StateIn(states.into_iter().collect())
    }

    pub fn radius(&self) -> u64 {
        match self {
            Self::Window { radius, .. } => *radius,
            _ => 0,
        }
    }

    pub fn holds(&self, path: &DriverPath, n: i64) -> Result<bool> {
        Ok(match self {
            Self::Always => true,
            Self::Never => false,
            Self::StateIn(s) => s.contains(&path.state(n)?),
            Self::Window { radius, predicate } => {
                let r = *radius as i64;
                predicate(&path.window(n - r, n + r)?)
            }
            Self::Marked(m) => m.contains(&path.absolute(n)),
        })
    }

    /// True when the event is decided by the driver state alone and holds for `state`.
    pub fn holds_for_state(&self, state: usize) -> Option<bool> {
        match self {
            Self::Always => Some(true),
            Self::Never => Some(false),
            Self::StateIn(s) => Some(s.contains(&state)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// The first `count` times n ≥ 1 at which the event holds at θⁿω (or θ⁻ⁿω).
pub fn return_times(path: &DriverPath, event: &EventSpec, count: usize, direction: Direction) -> Result<Vec<u64>> {
    let (lo, hi) = path.range();
    let r = event.radius() as i64;
    let limit = match direction {
        Direction::Forward => hi - r,
        Direction::Backward => -(lo + r),
    };
    let mut out = Vec::with_capacity(count);
    let mut n = 1;
    while out.len() < count && n <= limit {
        let idx = if direction == Direction::Forward { n } else { -n };
        if event.holds(path, idx)? {
            out.push(n as u64);
        }
        n += 1;
    }
    if out.len() < count {
        return Err(LabError::InsufficientReturns { found: out.len(), wanted: count });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fair() -> Arc<DriverSystem> {
        Arc::new(DriverSystem::iid(vec![0.5, 0.5]).unwrap())
    }

    #[test]
    fn one_state_window_is_constant() {
        let sys = Arc::new(DriverSystem::iid(vec![1.0]).unwrap());
        let p = sample_path(sys, 3, 9).unwrap();
        assert_eq!(p.window(-3, 3).unwrap(), vec![0; 7]);
        assert_eq!(p.range(), (-3, 3));
    }

    #[test]
    fn fair_coin_frequency() {
        let p = sample_path(fair(), 10_000, 42).unwrap();
        let w = p.window(-10_000, 10_000).unwrap();
        let freq = w.iter().filter(|&&s| s == 0).count() as f64 / w.len() as f64;
        assert!((0.47..=0.53).contains(&freq), "{freq}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_path(fair(), 50, 7).unwrap();
        let b = sample_path(fair(), 50, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_path(fair(), 50, 8).unwrap();
        assert_ne!(a.window(-50, 50).unwrap(), c.window(-50, 50).unwrap());
    }

    #[test]
    fn extension_then_restriction_is_identity() {
        let sys = Arc::new(DriverSystem::markov(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap());
        let small = sample_path(sys.clone(), 10, 3).unwrap();
        let mut big = sample_path(sys, 10, 3).unwrap();
        big.ensure(-300, 300).unwrap();
        assert_eq!(small.window(-10, 10).unwrap(), big.window(-10, 10).unwrap());
    }

    #[test]
    fn shift_examples() {
        let p = sample_path(fair(), 10, 11).unwrap();
        assert_eq!(p.shifted(0).unwrap(), p);
        let back = p.shifted(1).unwrap().shifted(-1).unwrap();
        assert_eq!(back.window(-10, 10).unwrap(), p.window(-10, 10).unwrap());
        let s = p.shifted(5).unwrap();
        let fresh = sample_path(fair(), 15, 11).unwrap();
        for j in -15..=10 {
            assert_eq!(s.state(j).unwrap(), fresh.state(j + 5).unwrap());
        }
    }

    #[test]
    fn window_cap_is_an_error() {
        let mut p = DriverPath::sample(fair(), 4, 1, 8).unwrap();
        assert!(matches!(p.ensure(-9, 0), Err(LabError::WindowExceeded { .. })));
        assert!(p.shifted(6).is_err());
    }

    #[test]
    fn return_time_examples() {
        let p = sample_path(fair(), 20, 5).unwrap();
        assert_eq!(return_times(&p, &EventSpec::Always, 3, Direction::Forward).unwrap(), vec![1, 2, 3]);
        let alt = DriverPath::explicit((0..21).map(|i| (i + 1) % 2).collect(), 0).unwrap();
        assert_eq!(alt.state(0).unwrap(), 1);
        let ev = EventSpec::states([0]);
        assert_eq!(return_times(&alt, &ev, 3, Direction::Forward).unwrap(), vec![1, 3, 5]);
        assert!(matches!(
            return_times(&alt, &EventSpec::Never, 1, Direction::Forward),
            Err(LabError::InsufficientReturns { .. })
        ));
    }

    #[test]
    fn geometric_mean_gap() {
        let sys = Arc::new(DriverSystem::iid(vec![0.25, 0.75]).unwrap());
        let p = sample_path(sys, 8000, 99).unwrap();
        let times = return_times(&p, &EventSpec::states([0]), 1000, Direction::Forward).unwrap();
        let mean = *times.last().unwrap() as f64 / 1000.0;
        assert!((mean - 4.0).abs() < 0.4, "{mean}");
    }

    #[test]
    fn markov_stationarity_within_three_sigma() {
        let p = vec![vec![0.9, 0.1, 0.0], vec![0.0, 0.5, 0.5], vec![0.3, 0.0, 0.7]];
        let sys = Arc::new(DriverSystem::markov(p).unwrap());
        let pi = sys.stationary().to_vec();
        let path = sample_path(sys.clone(), 50_000, 17).unwrap();
        let w = path.window(-50_000, 50_000).unwrap();
        for (pair_i, pair_j) in w.windows(2).map(|x| (x[0], x[1])) {
            assert!(sys.transition(pair_i, pair_j) > 0.0);
        }
        // batch means account for autocorrelation
        let batches = 100;
        let len = w.len() / batches;
        for s in 0..3 {
            let means: Vec<f64> = (0..batches)
                .map(|b| w[b * len..(b + 1) * len].iter().filter(|&&x| x == s).count() as f64 / len as f64)
                .collect();
            let m = means.iter().sum::<f64>() / batches as f64;
            let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
            let se = (var / batches as f64).sqrt();
            assert!((m - pi[s]).abs() <= 3.0 * se + 1e-3, "state {s}: {m} vs {}", pi[s]);
        }
    }

    #[test]
    fn law_validation() {
        assert!(DriverSystem::iid(vec![0.5, 0.4]).is_err());
        assert!(DriverSystem::iid(vec![]).is_err());
        assert!(DriverSystem::markov(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(DriverSystem::markov(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn shifted_returns_commute() {
        let p = sample_path(fair(), 200, 23).unwrap();
        let ev = EventSpec::states([1]);
        let a = return_times(&p, &ev, 30, Direction::Forward).unwrap();
        let b = return_times(&p.shifted(1).unwrap(), &ev, 29, Direction::Forward).unwrap();
        let expected: Vec<u64> = a.iter().filter(|&&t| t > 1).map(|t| t - 1).take(29).collect();
        assert_eq!(b, expected);
    }
}
