use serde::{Deserialize, Serialize};

use crate::driver::EventSpec;
use crate::error::{LabError, Result};
use crate::potential::Potential;
use crate::shift::{Fibered, Letter};

use super::operator::transfer_apply;
use super::{CylinderFunction, RpfTriple};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureReport {
    pub letter: Letter,
    /// Return times n at which Z_n was recorded.
    pub times: Vec<usize>,
    pub log_z: Vec<f64>,
    /// (1/n) log Z_n
    pub per_time: Vec<f64>,
    /// Mean of the per-time values over the second half of the returns.
    pub cesaro: f64,
    /// (log Z_N − log Z_M)/(N − M) for the last return N and the last return M ≤ N/2.
    pub estimate: f64,
    /// (1/N) Σ_{j<N} log λ_j when a solved triple covers the horizon.
    pub lambda_average: Option<f64>,
}

/// Relative Gurevič pressure from Z_n = Lⁿ(1_[a])(ξ) along returns to the event
/// (default: fibers whose alphabet contains `a`).
pub fn gurevich_pressure(
    phi: &Potential,
    sys: &Fibered,
    a: Letter,
    horizon: usize,
    omega_star: Option<&EventSpec>,
    triple: Option<&RpfTriple>,
) -> Result<PressureReport> {
    let contains = |n: i64| -> Result<bool> { Ok(sys.alphabet(n)?.binary_search(&a).is_ok()) };
    let returns = |n: i64| -> Result<bool> {
        Ok(contains(n)? && omega_star.map_or(Ok(true), |e| e.holds(sys.path(), n))?)
    };
    if !contains(0)? {
        return Err(LabError::Other(format!("letter {a} is not in the alphabet of fiber 0")));
    }
    let d = phi.depth().saturating_sub(1).max(1);
    let mut g = CylinderFunction::from_fn(sys, 0, d, |w| if w[0] == a { 1.0 } else { 0.0 })?;
    let mut log_scale = 0.0;
    let (mut times, mut log_z) = (Vec::new(), Vec::new());
    for n in 1..=horizon {
        g = transfer_apply(phi, sys, &g)?;
        let s = g.sup_norm();
        if s > 0.0 {
            g = g.map(|v| v / s);
            log_scale += s.ln();
        }
        if returns(n as i64)? {
            let v = g.value_at(sys, &[a])?;
            if v > 0.0 {
                times.push(n);
                log_z.push(log_scale + v.ln());
            }
        }
    }
    if times.len() < 2 {
        return Err(LabError::InsufficientReturns { found: times.len(), wanted: 2 });
    }
    let per_time: Vec<f64> = times.iter().zip(&log_z).map(|(&n, &z)| z / n as f64).collect();
    let half = per_time.len() / 2;
    let cesaro = per_time[half..].iter().sum::<f64>() / (per_time.len() - half) as f64;
    let last = times.len() - 1;
    let big_n = times[last];
    let m = times.iter().rposition(|&t| 2 * t <= big_n).unwrap_or(0).min(last - 1);
    let estimate = (log_z[last] - log_z[m]) / (big_n - times[m]) as f64;
    let lambda_average = match triple {
        Some(t) if t.first <= 0 && t.last >= big_n as i64 - 1 => Some(t.log_big_lambda(0, big_n)? / big_n as f64),
        _ => None,
    };
    Ok(PressureReport { letter: a, times, log_z, per_time, cesaro, estimate, lambda_average })
}
