//! Entropy + ∫φ dν against the pressure, along returns to a base event.

use serde::{Deserialize, Serialize};

use crate::driver::EventSpec;
use crate::error::{LabError, Result};
use crate::potential::Potential;
use crate::shift::{Fibered, Letter};
use crate::transfer::{gurevich_pressure, integrate_nu, CylinderFunction, RpfTriple};

use super::measure_at_depth;

#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    /// Largest cylinder length N considered.
    pub depth: usize,
    /// Return event; fibers in Ω_bi when absent.
    pub event: Option<EventSpec>,
    /// Horizon for the Gurevič estimate; 0 skips it.
    pub pressure_horizon: usize,
    /// Weight of the uniform kernel in the comparison measure.
    pub perturbation: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { depth: 12, event: None, pressure_horizon: 48, perturbation: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub perturbation: f64,
    pub entropy: f64,
    pub integral: f64,
    /// P̂ − (h_Q + ∫φ dQ); nonnegative by the variational inequality.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// H_n = −Σ ν_0[a] log ν_0[a] over words of length n, n = 1..=depth.
    pub entropy_curve: Vec<f64>,
    pub big_n: usize,
    pub big_m: usize,
    pub entropy: f64,
    pub integral: f64,
    pub pressure: f64,
    pub gap: f64,
    /// Spread of the increments H_{n+1} − H_n over [M, N).
    pub entropy_error: f64,
    /// Largest |∫1 dν_j − 1| over [M, N).
    pub integral_error: f64,
    /// |P̂ − Gurevič estimate| when the estimate is available.
    pub pressure_error: Option<f64>,
    pub gurevich: Option<f64>,
    pub comparison: Option<Comparison>,
}

fn shannon(ws: impl Iterator<Item = f64>) -> f64 {
    ws.filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

pub fn equilibrium_gap(phi: &Potential, tilde: &Potential, sys: &Fibered, triple: &RpfTriple, opts: &EquilibriumOptions) -> Result<EquilibriumReport> {
    if opts.depth < 2 {
        return Err(LabError::Config { field: "depths.entropy".into(), message: "needs at least 2".into() });
    }
    let returns = |n: i64| -> Result<bool> {
        match &opts.event {
            Some(e) => e.holds(sys.path(), n),
            None => sys.in_bi(n),
        }
    };
    let mut big_n = None;
    for n in (1..=opts.depth).rev() {
        if returns(n as i64)? {
            big_n = Some(n);
            break;
        }
    }
    let big_n = big_n.ok_or(LabError::InsufficientReturns { found: 0, wanted: 1 })?;
    let mut big_m = 0;
    for n in (1..=big_n / 2).rev() {
        if returns(n as i64)? {
            big_m = n;
            break;
        }
    }

    let nu = measure_at_depth(tilde, sys, triple, 0, opts.depth)?;
    let entropy_curve = (1..=opts.depth)
        .map(|n| Ok(shannon(nu.coarsen(n)?.atoms().map(|(_, x)| x))))
        .collect::<Result<Vec<_>>>()?;
    let h_at = |n: usize| if n == 0 { 0.0 } else { entropy_curve[n - 1] };
    let span = (big_n - big_m) as f64;
    let entropy = (h_at(big_n) - h_at(big_m)) / span;
    let increments: Vec<f64> = (big_m..big_n).map(|n| h_at(n + 1) - h_at(n)).collect();
    let entropy_error = increments.iter().fold(0.0f64, |m, v| m.max((v - entropy).abs()));

    let (mut integral, mut pressure, mut integral_error) = (0.0, 0.0, 0.0f64);
    for j in big_m as i64..big_n as i64 {
        let (ws, vals) = phi.values(sys, j)?;
        integral += integrate_nu(tilde, sys, triple, &CylinderFunction::new(ws, vals)?)?;
        pressure += triple.log_lambda(j)?;
        integral_error = integral_error.max((triple.nu(sys, j)?.mass() - 1.0).abs());
    }
    integral /= span;
    pressure /= span;
    let gap = (entropy + integral - pressure).abs();

    let gurevich = if opts.pressure_horizon > 0 {
        let a = sys.alphabet(0)?[0];
        gurevich_pressure(phi, sys, a, opts.pressure_horizon, opts.event.as_ref(), Some(triple)).ok().map(|p| p.estimate)
    } else {
        None
    };
    let comparison = if phi.depth() <= 2 && stationary(sys) {
        Some(compare(phi, tilde, sys, triple, big_m as i64, big_n as i64, pressure, opts.perturbation)?)
    } else {
        None
    };
    Ok(EquilibriumReport {
        entropy_curve,
        big_n,
        big_m,
        entropy,
        integral,
        pressure,
        gap,
        entropy_error,
        integral_error,
        pressure_error: gurevich.map(|g| (g - pressure).abs()),
        gurevich,
        comparison,
    })
}

fn stationary(sys: &Fibered) -> bool {
    let fs = sys.structure();
    let a0 = fs.alphabet(0);
    (1..fs.states()).all(|s| fs.alphabet(s) == a0 && a0.iter().all(|&a| a0.iter().all(|&b| fs.entry(s, a, b) == fs.entry(0, a, b))))
}

/// Markov measure Q = (1 − ε)P + εU on the allowed transitions, with P the one-step
/// kernel of ν_0; returns its entropy rate and the window average of ∫φ_j dQ.
#[allow(clippy::too_many_arguments)]
fn compare(phi: &Potential, tilde: &Potential, sys: &Fibered, triple: &RpfTriple, lo: i64, hi: i64, pressure: f64, eps: f64) -> Result<Comparison> {
    let alphabet: Vec<Letter> = sys.alphabet(0)?.to_vec();
    let k = alphabet.len();
    let nu2 = measure_at_depth(tilde, sys, triple, 0, 2)?;
    let mut q = vec![vec![0.0; k]; k];
    for (i, &a) in alphabet.iter().enumerate() {
        let succ = sys.successors(0, a)?;
        let row = nu2.cylinder_mass(&[a]);
        for (j, &b) in alphabet.iter().enumerate() {
            if succ.contains(&b) {
                let p = if row > 0.0 { nu2.cylinder_mass(&[a, b]) / row } else { 1.0 / succ.len() as f64 };
                q[i][j] = (1.0 - eps) * p + eps / succ.len() as f64;
            }
        }
    }
    // stationary vector of the lazy chain
    let mut pi = vec![1.0 / k as f64; k];
    for _ in 0..100_000 {
        let mut next = vec![0.0; k];
        for i in 0..k {
            for j in 0..k {
                next[j] += pi[i] * (0.5 * q[i][j] + if i == j { 0.5 } else { 0.0 });
            }
        }
        let diff = next.iter().zip(&pi).map(|(x, y)| (x - y).abs()).sum::<f64>();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    let entropy: f64 = (0..k).map(|i| pi[i] * shannon(q[i].iter().copied())).sum();
    let mut integral = 0.0;
    for j in lo..hi {
        for (i, &a) in alphabet.iter().enumerate() {
            for (l, &b) in alphabet.iter().enumerate() {
                if q[i][l] > 0.0 {
                    integral += pi[i] * q[i][l] * phi.evaluate(sys.path(), j, &[a, b])?;
                }
            }
        }
    }
    integral /= (hi - lo) as f64;
    Ok(Comparison { perturbation: eps, entropy, integral, margin: pressure - (entropy + integral) })
}
