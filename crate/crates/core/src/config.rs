//! Versioned JSON experiment configuration with field-level validation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::apps::RandomMatrixFamily;
use crate::driver::{sample_path, DriverLaw, DriverPath, DriverSystem, EventSpec};
use crate::error::{LabError, Result};
use crate::potential::{Potential, Table};
use crate::shift::{Bip, FiberStructure, Fibered, Letter};
use crate::transfer::{transfer_apply, CylinderFunction, Observable, RpfOptions};
use crate::transport::{CertificateOptions, NRule};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub driver: DriverConfig,
    pub fibers: FiberConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub depths: DepthConfig,
    #[serde(default)]
    pub horizons: HorizonConfig,
    #[serde(default)]
    pub certificate: CertificateConfig,
    #[serde(default)]
    pub experiments: ExperimentsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Iid,
    Markov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub states: Vec<String>,
    pub law: LawKind,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberStateConfig {
    pub alphabet: Vec<Letter>,
    /// Rows follow the alphabet, columns the universe.
    pub matrix: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BipConfig {
    pub letters: Vec<Letter>,
    /// Driver states forming Ω_bi; every state when absent.
    #[serde(default)]
    pub omega_bi: Option<Vec<String>>,
    #[serde(default)]
    pub omega_bp: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub universe: Vec<Letter>,
    pub states: BTreeMap<String, FiberStateConfig>,
    pub bip: BipConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Constant {
        value: f64,
    },
    /// φ(x) = log p_{x₀x₁}; rows over the state's alphabet, columns over the universe.
    LogMatrix {
        matrices: BTreeMap<String, Vec<Vec<f64>>>,
        #[serde(default)]
        kappa_max: Option<f64>,
    },
    /// Word keys are comma-separated letters, e.g. "1,2".
    Tables {
        depth: usize,
        #[serde(default)]
        index: Option<usize>,
        tables: BTreeMap<String, BTreeMap<String, f64>>,
        #[serde(default)]
        kappa_max: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    pub r: f64,
    pub beta: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { r: 0.5, beta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthConfig {
    /// Depth of the conformal measures.
    pub working: usize,
    /// Length of the past words in the ψ-algebra.
    pub psi: usize,
    /// Longest cylinders in the entropy estimate.
    pub entropy: usize,
    /// Cap on measure depth.
    pub max: usize,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self { working: 2, psi: 3, entropy: 12, max: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    /// Radius of the sampled driver window.
    pub window: u64,
    pub burn_in: usize,
    pub tol: f64,
    /// Largest n in decay, correlation and mixing curves.
    pub decay: usize,
    /// Number of l_n and k_n requested.
    pub returns: usize,
    pub pressure: usize,
    pub matrix: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { window: 1024, burn_in: 200, tol: 1e-10, decay: 40, returns: 12, pressure: 1000, matrix: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateConfig {
    pub n_rule: NRule,
    pub horizon: usize,
    pub max_scan: usize,
    /// o per driver state; min W¹ when absent.
    pub origin: BTreeMap<String, Letter>,
    pub b_threshold: Option<f64>,
    pub c_threshold: Option<f64>,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        let d = CertificateOptions::default();
        Self { n_rule: d.n_rule, horizon: d.horizon, max_scan: d.max_scan, origin: BTreeMap::new(), b_threshold: None, c_threshold: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableSpec {
    Letter { letter: Letter },
    /// State-independent values on words of length `depth`; missing words are 0.
    Table { depth: usize, values: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentsConfig {
    /// Observable for the decay and correlation curves (f) and the test function g.
    pub f: ObservableSpec,
    pub g: ObservableSpec,
    pub direct_lags: usize,
    pub lemma_fibers: usize,
    pub lemma_functions: usize,
    pub lemma_measures: usize,
    pub gibbs_samples: usize,
    pub perturbation: f64,
    /// Letter used for the Gurevič sums; min W¹_0 when absent.
    pub pressure_letter: Option<Letter>,
}

impl Default for ExperimentsConfig {
    fn default() -> Self {
        Self {
            f: ObservableSpec::Letter { letter: 1 },
            g: ObservableSpec::Letter { letter: 1 },
            direct_lags: 6,
            lemma_fibers: 8,
            lemma_functions: 8,
            lemma_measures: 4,
            gibbs_samples: 10_000,
            perturbation: 0.3,
            pressure_letter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

fn err(field: impl Into<String>, message: impl Into<String>) -> LabError {
    LabError::Config { field: field.into(), message: message.into() }
}

pub fn parse_word(key: &str) -> std::result::Result<Vec<Letter>, String> {
    key.split(',').map(|s| s.trim().parse::<Letter>().map_err(|_| format!("bad letter {s:?} in word {key:?}"))).collect()
}

fn parse_table(field: &str, t: &BTreeMap<String, f64>, depth: usize) -> Result<Table> {
    let mut out = HashMap::new();
    for (k, &v) in t {
        let w = parse_word(k).map_err(|m| err(field, m))?;
        if w.len() != depth {
            return Err(err(format!("{field}.{k}"), format!("word length {} differs from depth {depth}", w.len())));
        }
        if !v.is_finite() {
            return Err(err(format!("{field}.{k}"), "value must be finite"));
        }
        out.insert(w, v);
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Parses and validates; the error names the first offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| err("<document>", e.to_string()))?;
        if let Some(e) = cfg.field_errors().into_iter().next() {
            return Err(e);
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| err("<file>", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Every field-level problem found.
    pub fn field_errors(&self) -> Vec<LabError> {
        let mut out = Vec::new();
        let mut push = |f: String, m: String| out.push(err(f, m));
        if self.version != SCHEMA_VERSION {
            push("version".into(), format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version));
        }
        let labels = &self.driver.states;
        let n = labels.len();
        if n == 0 {
            push("driver.states".into(), "at least one state required".into());
        }
        if labels.iter().collect::<BTreeSet<_>>().len() != n {
            push("driver.states".into(), "labels must be distinct".into());
        }
        match self.driver.law {
            LawKind::Iid => match &self.driver.weights {
                None => push("driver.weights".into(), "required for an iid law".into()),
                Some(w) if w.len() != n => push("driver.weights".into(), format!("{} weights for {n} states", w.len())),
                Some(_) => {}
            },
            LawKind::Markov => match &self.driver.matrix {
                None => push("driver.matrix".into(), "required for a markov law".into()),
                Some(m) if m.len() != n || m.iter().any(|r| r.len() != n) => push("driver.matrix".into(), format!("must be {n}x{n}")),
                Some(_) => {}
            },
        }
        if n > 0 && out.is_empty() {
            if let Err(e) = self.driver_system() {
                out.push(err(if self.driver.law == LawKind::Iid { "driver.weights" } else { "driver.matrix" }, e.to_string()));
            }
        }
        let mut push = |f: String, m: String| out.push(err(f, m));

        let uni = &self.fibers.universe;
        if uni.is_empty() || uni.windows(2).any(|w| w[0] >= w[1]) {
            push("fibers.universe".into(), "must be non-empty, sorted and distinct".into());
        }
        for l in labels {
            if !self.fibers.states.contains_key(l) {
                push(format!("fibers.states.{l}"), "missing fiber for driver state".into());
            }
        }
        for (l, f) in &self.fibers.states {
            let field = format!("fibers.states.{l}");
            if !labels.contains(l) {
                push(field.clone(), "unknown driver state".into());
            }
            if f.alphabet.is_empty() || f.alphabet.windows(2).any(|w| w[0] >= w[1]) {
                push(format!("{field}.alphabet"), "must be non-empty, sorted and distinct".into());
            }
            if let Some(a) = f.alphabet.iter().find(|a| uni.binary_search(a).is_err()) {
                push(format!("{field}.alphabet"), format!("letter {a} outside the universe"));
            }
            if f.matrix.len() != f.alphabet.len() {
                push(format!("{field}.matrix"), format!("{} rows for {} letters", f.matrix.len(), f.alphabet.len()));
            }
            for (i, row) in f.matrix.iter().enumerate() {
                if row.len() != uni.len() {
                    push(format!("{field}.matrix[{i}]"), format!("{} columns for a universe of {}", row.len(), uni.len()));
                }
                if row.iter().any(|&e| e > 1) {
                    push(format!("{field}.matrix[{i}]"), "entries must be 0 or 1".into());
                }
            }
        }
        if let Some(a) = self.fibers.bip.letters.iter().find(|a| uni.binary_search(a).is_err()) {
            push("fibers.bip.letters".into(), format!("letter {a} outside the universe"));
        }
        if self.fibers.bip.letters.is_empty() {
            push("fibers.bip.letters".into(), "I must be non-empty".into());
        }
        for (name, set) in [("omega_bi", &self.fibers.bip.omega_bi), ("omega_bp", &self.fibers.bip.omega_bp)] {
            for l in set.iter().flatten() {
                if !labels.contains(l) {
                    push(format!("fibers.bip.{name}"), format!("unknown driver state {l:?}"));
                }
            }
        }

        match &self.potential {
            PotentialConfig::Constant { value } => {
                if !value.is_finite() {
                    push("potential.value".into(), "must be finite".into());
                }
            }
            PotentialConfig::LogMatrix { matrices, kappa_max } => {
                for l in labels {
                    let field = format!("potential.matrices.{l}");
                    let (Some(m), Some(f)) = (matrices.get(l), self.fibers.states.get(l)) else {
                        push(field, "missing matrix for driver state".into());
                        continue;
                    };
                    if m.len() != f.alphabet.len() || m.iter().any(|r| r.len() != uni.len()) {
                        push(field.clone(), format!("must be {}x{}", f.alphabet.len(), uni.len()));
                    } else if m.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
                        push(field.clone(), "entries must be finite and nonnegative".into());
                    } else {
                        for (i, (row, srow)) in m.iter().zip(&f.matrix).enumerate() {
                            if row.iter().zip(srow).any(|(p, e)| (*p > 0.0) != (*e == 1)) {
                                push(format!("{field}[{i}]"), "sign pattern differs from the fiber matrix".into());
                            }
                        }
                    }
                }
                if let Some(k) = kappa_max {
                    if !(*k >= 0.0) {
                        push("potential.kappa_max".into(), "must be nonnegative".into());
                    }
                }
            }
            PotentialConfig::Tables { depth, index, tables, kappa_max } => {
                if *depth == 0 {
                    push("potential.depth".into(), "must be positive".into());
                }
                if let Some(i) = index {
                    if !(1..=2).contains(i) {
                        push("potential.index".into(), "must be 1 or 2".into());
                    }
                }
                for l in labels {
                    match tables.get(l) {
                        None => push(format!("potential.tables.{l}"), "missing table for driver state".into()),
                        Some(t) => {
                            if let Err(LabError::Config { field, message }) = parse_table(&format!("potential.tables.{l}"), t, *depth) {
                                push(field, message);
                            }
                        }
                    }
                }
                if let Some(k) = kappa_max {
                    if !(*k >= 0.0) {
                        push("potential.kappa_max".into(), "must be nonnegative".into());
                    }
                }
            }
        }
        let m = &self.metric;
        if !(m.r > 0.0 && m.r < 1.0) {
            push("metric.r".into(), format!("{} is not in (0, 1)", m.r));
        }
        if !(m.beta > 0.0 && m.beta < 1.0) {
            push("metric.beta".into(), format!("{} is not in (0, 1)", m.beta));
        }
        let d = &self.depths;
        for (name, v) in [("working", d.working), ("psi", d.psi), ("entropy", d.entropy), ("max", d.max)] {
            if v == 0 {
                push(format!("depths.{name}"), "must be positive".into());
            }
        }
        if d.working > d.max {
            push("depths.working".into(), format!("exceeds depths.max = {}", d.max));
        }
        if d.entropy < 2 {
            push("depths.entropy".into(), "must be at least 2".into());
        }
        let h = &self.horizons;
        for (name, v) in [("burn_in", h.burn_in), ("decay", h.decay), ("returns", h.returns), ("pressure", h.pressure), ("matrix", h.matrix)] {
            if v == 0 {
                push(format!("horizons.{name}"), "must be positive".into());
            }
        }
        if h.window == 0 {
            push("horizons.window".into(), "must be positive".into());
        }
        if !(h.tol > 0.0) {
            push("horizons.tol".into(), "must be positive".into());
        }
        for (l, o) in &self.certificate.origin {
            match self.fibers.states.get(l) {
                None => push(format!("certificate.origin.{l}"), "unknown driver state".into()),
                Some(f) if !f.alphabet.contains(o) => push(format!("certificate.origin.{l}"), format!("letter {o} not in the alphabet")),
                Some(_) => {}
            }
        }
        for (name, v) in [("b_threshold", self.certificate.b_threshold), ("c_threshold", self.certificate.c_threshold)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    push(format!("certificate.{name}"), "must be positive".into());
                }
            }
        }
        if self.certificate.horizon == 0 || self.certificate.max_scan == 0 {
            push("certificate".into(), "horizon and max_scan must be positive".into());
        }
        let e = &self.experiments;
        for (name, o) in [("f", &e.f), ("g", &e.g)] {
            match o {
                ObservableSpec::Letter { letter } => {
                    if uni.binary_search(letter).is_err() {
                        push(format!("experiments.{name}.letter"), format!("letter {letter} outside the universe"));
                    }
                }
                ObservableSpec::Table { depth, values } => {
                    if *depth == 0 {
                        push(format!("experiments.{name}.depth"), "must be positive".into());
                    } else if let Err(LabError::Config { field, message }) = parse_table(&format!("experiments.{name}.values"), values, *depth) {
                        push(field, message);
                    }
                }
            }
        }
        if !(e.perturbation > 0.0 && e.perturbation < 1.0) {
            push("experiments.perturbation".into(), "must lie in (0, 1)".into());
        }
        if e.lemma_fibers == 0 || e.lemma_functions == 0 || e.lemma_measures == 0 {
            push("experiments".into(), "lemma counts must be positive".into());
        }
        if self.output.dir.is_empty() {
            push("output.dir".into(), "must be non-empty".into());
        }
        out
    }

    pub fn driver_system(&self) -> Result<DriverSystem> {
        let law = match self.driver.law {
            LawKind::Iid => DriverLaw::Iid(self.driver.weights.clone().ok_or_else(|| err("driver.weights", "missing"))?),
            LawKind::Markov => DriverLaw::Markov(self.driver.matrix.clone().ok_or_else(|| err("driver.matrix", "missing"))?),
        };
        DriverSystem::new(self.driver.states.clone(), law)
    }

    fn state_event(&self, set: &Option<Vec<String>>) -> EventSpec {
        match set {
            None => EventSpec::Always,
            Some(ls) => EventSpec::states(ls.iter().filter_map(|l| self.driver.states.iter().position(|x| x == l))),
        }
    }

    fn fiber(&self, s: usize) -> Result<&FiberStateConfig> {
        let l = &self.driver.states[s];
        self.fibers.states.get(l).ok_or_else(|| err(format!("fibers.states.{l}"), "missing"))
    }

    pub fn structure(&self) -> Result<FiberStructure> {
        let bip = Bip {
            letters: self.fibers.bip.letters.iter().copied().collect(),
            omega_bi: self.state_event(&self.fibers.bip.omega_bi),
            omega_bp: self.state_event(&self.fibers.bip.omega_bp),
        };
        let fibers = (0..self.driver.states.len()).map(|s| self.fiber(s).map(|f| (f.alphabet.clone(), f.matrix.clone()))).collect::<Result<Vec<_>>>()?;
        FiberStructure::new(self.fibers.universe.clone(), fibers, bip)
    }

    pub fn path(&self, seed: u64) -> Result<DriverPath> {
        sample_path(Arc::new(self.driver_system()?), self.horizons.window, seed)
    }

    /// The fibered system along the driver path drawn from `seed`.
    pub fn system(&self, seed: u64) -> Result<Fibered> {
        Ok(Fibered::new(Arc::new(self.structure()?), Arc::new(self.path(seed)?)))
    }

    pub fn potential(&self) -> Result<Potential> {
        let r = self.metric.r;
        match &self.potential {
            PotentialConfig::Constant { value } => Potential::constant(*value, r),
            PotentialConfig::LogMatrix { kappa_max, .. } => {
                let p = self.matrix_family().expect("log_matrix family").potential(r)?;
                Ok(match kappa_max {
                    Some(k) => p.with_kappa_bound(*k),
                    None => p,
                })
            }
            PotentialConfig::Tables { depth, index, tables, kappa_max } => {
                let ts = self
                    .driver
                    .states
                    .iter()
                    .map(|l| {
                        let field = format!("potential.tables.{l}");
                        parse_table(&field, tables.get(l).ok_or_else(|| err(&field, "missing"))?, *depth)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let p = Potential::tables(*depth, r, index.unwrap_or(if *depth <= 1 { 1 } else { 2 }), ts)?;
                Ok(match kappa_max {
                    Some(k) => p.with_kappa_bound(*k),
                    None => p,
                })
            }
        }
    }

    /// The matrix family behind a log_matrix potential.
    pub fn matrix_family(&self) -> Option<RandomMatrixFamily> {
        let PotentialConfig::LogMatrix { matrices, .. } = &self.potential else {
            return None;
        };
        let mut alphabets = Vec::new();
        let mut ms = Vec::new();
        for l in &self.driver.states {
            alphabets.push(self.fibers.states.get(l)?.alphabet.clone());
            ms.push(matrices.get(l)?.clone());
        }
        Some(RandomMatrixFamily { universe: self.fibers.universe.clone(), alphabets, matrices: ms })
    }

    pub fn certificate_options(&self) -> CertificateOptions {
        let c = &self.certificate;
        let origin = (!c.origin.is_empty()).then(|| {
            self.driver
                .states
                .iter()
                .enumerate()
                .map(|(s, l)| c.origin.get(l).copied().unwrap_or_else(|| self.fiber(s).map(|f| f.alphabet[0]).unwrap_or(0)))
                .collect()
        });
        CertificateOptions {
            beta: self.metric.beta,
            n_rule: c.n_rule,
            horizon: c.horizon,
            max_scan: c.max_scan,
            origin,
            b_threshold: c.b_threshold,
            c_threshold: c.c_threshold,
        }
    }

    pub fn rpf_options(&self) -> RpfOptions {
        RpfOptions { depth: self.depths.working, burn_in: self.horizons.burn_in, tol: self.horizons.tol, omega_star: EventSpec::Always }
    }

    pub fn observable(spec: &ObservableSpec) -> Result<Observable> {
        Ok(match spec {
            ObservableSpec::Letter { letter } => Observable::letter(*letter),
            ObservableSpec::Table { depth, values } => {
                let t = parse_table("experiments", values, *depth)?;
                Observable::new(*depth, move |_, w| t.get(w).copied().unwrap_or(0.0))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    /// Empirical frequencies of Ω_bi and Ω_bp along the sampled steps.
    pub bi_frequency: f64,
    pub bp_frequency: f64,
    pub steps: usize,
    /// max over sampled fibers of ‖log L 1‖∞, finite when (S) holds.
    pub log_l1_max: f64,
}

/// Structural checks without running experiments: b.i.p. clauses and row/column
/// positivity over all positive-probability transitions, empirical base-event
/// frequencies and the summability of L1.
pub fn validate_structure(cfg: &ExperimentConfig, seed: u64, steps: usize) -> Result<ValidationReport> {
    let mut violations: Vec<String> = cfg.field_errors().iter().map(ToString::to_string).collect();
    if !violations.is_empty() {
        return Ok(ValidationReport { valid: false, violations, warnings: Vec::new(), bi_frequency: f64::NAN, bp_frequency: f64::NAN, steps: 0, log_l1_max: f64::NAN });
    }
    let system = cfg.driver_system()?;
    let fs = cfg.structure()?;
    violations.extend(fs.validate(&system).into_iter().map(|v| format!("states {:?}: {}", v.states, v.message)));

    let radius = (steps / 2).max(1) as u64;
    let path = DriverPath::sample(Arc::new(system), radius, seed, radius.max(crate::driver::max_radius_from_env()))?;
    let (lo, hi) = path.range();
    let (mut bi, mut bp, mut count) = (0usize, 0usize, 0usize);
    for n in lo..=hi {
        count += 1;
        bi += fs.bip().omega_bi.holds(&path, n)? as usize;
        bp += fs.bip().omega_bp.holds(&path, n)? as usize;
    }
    let bi_frequency = bi as f64 / count as f64;
    let bp_frequency = bp as f64 / count as f64;
    let mut warnings = Vec::new();
    if bi == 0 {
        warnings.push(format!("Ω_bi has empirical frequency 0 over {count} steps"));
    }
    if bp == 0 {
        warnings.push(format!("Ω_bp has empirical frequency 0 over {count} steps"));
    }

    let mut log_l1_max = f64::NAN;
    if violations.is_empty() {
        let sys = Fibered::new(Arc::new(fs), Arc::new(path));
        let phi = cfg.potential()?;
        log_l1_max = 0.0;
        for j in -16..16 {
            let one = CylinderFunction::constant(&sys, j, 1, 1.0)?;
            let l1 = transfer_apply(&phi, &sys, &one)?;
            let m = l1.values().iter().fold(0.0f64, |m, v| m.max(v.ln().abs()));
            log_l1_max = log_l1_max.max(m);
        }
        if !log_l1_max.is_finite() {
            violations.push("summability: log L1 is not finite on the sampled fibers".into());
        }
    }
    Ok(ValidationReport { valid: violations.is_empty(), violations, warnings, bi_frequency, bp_frequency, steps: count, log_l1_max })
}
