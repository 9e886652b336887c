//! Exact Wasserstein distances on atomic measures, the explicit coupling,
//! contraction certificates and their empirical verification.

mod certificate;
mod coupling;
mod decay;
mod lemma;
mod simplex;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::shift::{Fibered, Letter, Metric};
use crate::transfer::{AtomicMeasure, CylinderFunction};

pub use certificate::{
    big_k, contraction_constants, return_sequences, Block, CertificateOptions, Certifier, ContractionCertificate,
    FiberConstants, NRule,
};
pub use coupling::{build_coupling, Coupling};
pub use decay::{verify_decay, DecayCurve, DecayOptions, DecayReport};
pub use lemma::{verify_main_lemma, LemmaOptions, LemmaReport, LemmaRow};
pub use simplex::{solve_transport, TransportSolution};

/// Largest number of atoms on either side of a transport problem.
pub const DEFAULT_LP_CAP: usize = 4096;

/// A coupling of two atomic measures on a common fiber and depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub anchor: i64,
    pub source: Vec<Vec<Letter>>,
    pub target: Vec<Vec<Letter>>,
    pub source_weights: Vec<f64>,
    pub target_weights: Vec<f64>,
    /// Row-major, `source.len() × target.len()`.
    pub plan: Vec<f64>,
    pub cost: f64,
    /// Distance scale below which the depth-m representation cannot resolve points: α r^m.
    pub resolution: f64,
}

impl TransportPlan {
    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.target.len() + j]
    }

    /// Largest marginal error against the declared weights.
    pub fn marginal_error(&self) -> f64 {
        let nt = self.target.len();
        let mut err = 0.0f64;
        for (i, w) in self.source_weights.iter().enumerate() {
            let row: f64 = self.plan[i * nt..(i + 1) * nt].iter().sum();
            err = err.max((row - w).abs());
        }
        for (j, w) in self.target_weights.iter().enumerate() {
            let col: f64 = (0..self.source.len()).map(|i| self.plan[i * nt + j]).sum();
            err = err.max((col - w).abs());
        }
        err
    }

    /// Σ plan · distance under `metric`.
    pub fn cost_under(&self, metric: Metric) -> f64 {
        let nt = self.target.len();
        let mut c = 0.0;
        for (i, a) in self.source.iter().enumerate() {
            for (j, b) in self.target.iter().enumerate() {
                let x = self.plan[i * nt + j];
                if x != 0.0 {
                    c += x * metric.words(a, b);
                }
            }
        }
        c
    }

    /// Mass on pairs at distance at most `radius`.
    pub fn mass_within(&self, metric: Metric, radius: f64) -> f64 {
        let nt = self.target.len();
        let mut m = 0.0;
        for (i, a) in self.source.iter().enumerate() {
            for (j, b) in self.target.iter().enumerate() {
                if metric.words(a, b) <= radius {
                    m += self.plan[i * nt + j];
                }
            }
        }
        m
    }
}

/// Both measures on the same fiber, lifted to a common depth, zero atoms dropped.
fn common_support(sys: &Fibered, mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<(Vec<(Vec<Letter>, f64)>, Vec<(Vec<Letter>, f64)>, usize)> {
    if mu.anchor() != nu.anchor() {
        return Err(LabError::AnchorMismatch(mu.anchor(), nu.anchor()));
    }
    let (a, b) = (mu.mass(), nu.mass());
    if (a - b).abs() > 1e-10 * a.max(b).max(1.0) {
        return Err(LabError::MassMismatch(a, b));
    }
    let d = mu.depth().max(nu.depth());
    let keep = |m: &AtomicMeasure| -> Result<Vec<(Vec<Letter>, f64)>> {
        Ok(m.lift(sys, d)?.atoms().filter(|(_, x)| *x > 0.0).map(|(w, x)| (w.to_vec(), x)).collect())
    };
    let (s, t) = (keep(mu)?, keep(nu)?);
    if s.len() > DEFAULT_LP_CAP || t.len() > DEFAULT_LP_CAP {
        return Err(LabError::Lp(format!("{}x{} atoms exceed the cap {DEFAULT_LP_CAP}", s.len(), t.len())));
    }
    Ok((s, t, d))
}

/// W(μ, ν) = min Σ d(x, y) m(x, y) over couplings, solved exactly.
pub fn wasserstein(sys: &Fibered, mu: &AtomicMeasure, nu: &AtomicMeasure, metric: Metric) -> Result<(f64, TransportPlan)> {
    let (s, t, d) = common_support(sys, mu, nu)?;
    let anchor = mu.anchor();
    let resolution = metric.level(d);
    if s.is_empty() || t.is_empty() {
        let plan = TransportPlan { anchor, source: vec![], target: vec![], source_weights: vec![], target_weights: vec![], plan: vec![], cost: 0.0, resolution };
        return Ok((0.0, plan));
    }
    let supply: Vec<f64> = s.iter().map(|p| p.1).collect();
    let demand: Vec<f64> = t.iter().map(|p| p.1).collect();
    let cost: Vec<f64> = s.iter().flat_map(|(a, _)| t.iter().map(move |(b, _)| metric.words(a, b))).collect();
    let sol = solve_transport(&supply, &demand, &cost)?;
    // complementary slackness certificate
    let nt = t.len();
    let mut worst = 0.0f64;
    for i in 0..s.len() {
        for j in 0..nt {
            worst = worst.max(sol.u[i] + sol.v[j] - cost[i * nt + j]);
        }
    }
    let dual = sol.dual_objective(&supply, &demand);
    if worst > 1e-10 || (dual - sol.cost).abs() > 1e-10 {
        return Err(LabError::Lp(format!("optimality certificate failed: dual infeasibility {worst:e}, gap {:e}", dual - sol.cost)));
    }
    let plan = TransportPlan {
        anchor,
        source: s.into_iter().map(|p| p.0).collect(),
        target: t.into_iter().map(|p| p.0).collect(),
        source_weights: supply,
        target_weights: demand,
        plan: sol.plan,
        cost: sol.cost,
        resolution,
    };
    Ok((plan.cost, plan))
}

/// sup ∫f dμ − ∫f dν over 1-Lipschitz f on the union of the supports, with the
/// maximizer extended to every word of the common depth by f(z) = min_k f_k + d(z, x_k).
pub fn lipschitz_dual(sys: &Fibered, mu: &AtomicMeasure, nu: &AtomicMeasure, metric: Metric) -> Result<(f64, CylinderFunction)> {
    let (s, t, d) = common_support(sys, mu, nu)?;
    let mut points: Vec<(Vec<Letter>, f64)> = s;
    for (w, x) in t {
        points.push((w, -x));
    }
    points.sort_by(|a, b| a.0.cmp(&b.0));
    let mut merged: Vec<(Vec<Letter>, f64)> = Vec::with_capacity(points.len());
    for (w, x) in points {
        match merged.last_mut() {
            Some(last) if last.0 == w => last.1 += x,
            _ => merged.push((w, x)),
        }
    }
    let anchor = mu.anchor();
    if merged.is_empty() {
        return Ok((0.0, CylinderFunction::constant(sys, anchor, d, 0.0)?));
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = merged.iter().map(|(_, c)| lp.add_var(*c, (-1.0, 1.0))).collect();
    for (a, (wa, _)) in merged.iter().enumerate() {
        for (b, (wb, _)) in merged.iter().enumerate() {
            if a != b {
                lp.add_constraint([(vars[a], 1.0), (vars[b], -1.0)], ComparisonOp::Le, metric.words(wa, wb));
            }
        }
    }
    let solution = lp
        .solve()
        .map_err(|e| LabError::Lp(format!("dual LP: {e}")))?
        .into_solution()
        .map_err(|e| LabError::Lp(format!("dual LP interrupted: {e:?}")))?;
    let values: Vec<f64> = vars.iter().map(|&v| solution.var_value(v)).collect();
    let value = merged.iter().zip(&values).map(|((_, c), f)| c * f).sum::<f64>();
    let witness = CylinderFunction::from_fn(sys, anchor, d, |z| {
        merged.iter().zip(&values).map(|((w, _), f)| f + metric.words(z, w)).fold(f64::INFINITY, f64::min)
    })?;
    Ok((value, witness))
}

/// Closed form for the ultrametric d_r-type distances: W = Σ_cylinders |μ(c) − ν(c)|·(h_{|c|−1} − h_{|c|})
/// with node heights h_j = level(j)/2 and leaves at height 0.
pub fn ultrametric_wasserstein(sys: &Fibered, mu: &AtomicMeasure, nu: &AtomicMeasure, metric: Metric) -> Result<f64> {
    let (s, t, d) = common_support(sys, mu, nu)?;
    let height = |j: usize| if j >= d { 0.0 } else { metric.level(j) / 2.0 };
    let mut total = 0.0;
    for len in 1..=d {
        let mut diff: std::collections::BTreeMap<&[Letter], f64> = std::collections::BTreeMap::new();
        for (w, x) in &s {
            *diff.entry(&w[..len]).or_default() += x;
        }
        for (w, x) in &t {
            *diff.entry(&w[..len]).or_default() -= x;
        }
        let edge = height(len - 1) - height(len);
        total += edge * diff.values().map(|v| v.abs()).sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::driver::DriverPath;
    use crate::shift::FiberStructure;

    fn full(n: u32) -> Fibered {
        Fibered::new(Arc::new(FiberStructure::full_shift(n, 1).unwrap()), Arc::new(DriverPath::explicit(vec![0; 41], 20).unwrap()))
    }

    #[test]
    fn identical_measures_cost_nothing() {
        let sys = full(2);
        let m = Metric::adjusted(0.5, 2.0).unwrap();
        let mu = AtomicMeasure::from_pairs(0, 2, vec![(vec![1, 2], 0.3), (vec![2, 2], 0.7)]).unwrap();
        let (w, plan) = wasserstein(&sys, &mu, &mu, m).unwrap();
        assert_eq!(w, 0.0);
        assert!(plan.marginal_error() < 1e-12);
        assert!((plan.mass(0, 0) - 0.3).abs() < 1e-15 && (plan.mass(1, 1) - 0.7).abs() < 1e-15);
        let (v, f) = lipschitz_dual(&sys, &mu, &mu, m).unwrap();
        assert!(v.abs() < 1e-12);
        assert!(f.lipschitz(m) <= 1.0 + 1e-9);
    }

    #[test]
    fn diracs() {
        let sys = full(2);
        let m = Metric::adjusted(0.5, 3.0).unwrap();
        let x = AtomicMeasure::dirac(0, vec![1, 1, 2]).unwrap();
        let y = AtomicMeasure::dirac(0, vec![1, 2]).unwrap();
        let d = m.words(&[1, 1, 2], &[1, 2, 1]);
        let (w, plan) = wasserstein(&sys, &x, &y, m).unwrap();
        assert!((w - d).abs() < 1e-15 && plan.plan.len() == 1);
        let (v, f) = lipschitz_dual(&sys, &x, &y, m).unwrap();
        assert!((v - d).abs() < 1e-9);
        assert!(f.lipschitz(m) <= 1.0 + 1e-9);
        assert!((ultrametric_wasserstein(&sys, &x, &y, m).unwrap() - d).abs() < 1e-15);
    }

    #[test]
    fn mismatched_mass_is_rejected() {
        let sys = full(2);
        let m = Metric::raw(0.5).unwrap();
        let x = AtomicMeasure::dirac(0, vec![1]).unwrap();
        let y = x.scaled(0.5).unwrap();
        assert!(matches!(wasserstein(&sys, &x, &y, m), Err(LabError::MassMismatch(..))));
    }
}
