//! Decay of ‖L̃ⁿf − ∫f dν‖∞ against the block products, the tⁿ envelopes
//! and an exponential fit.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fit::{fit_exponential, ExpFit, MIN_FIT_POINTS};
use crate::potential::Potential;
use crate::shift::{Fibered, Metric};
use crate::transfer::{integrate_nu, transfer_apply, Observable, RpfTriple};

use super::certificate::ContractionCertificate;

const SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DecayOptions {
    pub observable: Observable,
    /// Forward steps from fiber 0.
    pub horizon: usize,
    /// Gaps below this are ignored by the fit.
    pub floor: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<usize>,
    pub gaps: Vec<f64>,
    /// Π t over completed blocks times D̄(f).
    pub bounds: Vec<f64>,
    /// 2c tⁱ D(f) with i the number of completed blocks.
    pub envelope_c: Vec<f64>,
    /// 4B tⁱ D(f).
    pub envelope_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub integral: f64,
    /// Lipschitz seminorm under the adjusted metric at fiber 0.
    pub d_bar: f64,
    /// Lipschitz seminorm under d_r at fiber 0.
    pub d_raw: f64,
    pub all: DecayCurve,
    pub along_l: DecayCurve,
    pub along_k: DecayCurve,
    pub fit: Option<ExpFit>,
    /// Empirical rate and constant: gap_n ≤ c* sⁿ D̄(f).
    pub s: Option<f64>,
    pub c_star: Option<f64>,
    /// Fitted rate per block along l against the largest block ratio.
    pub block_rate: Option<f64>,
    pub block_rate_exceeds_t: bool,
    pub monotone: bool,
    pub violations: Vec<String>,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

fn gap(g: &crate::transfer::CylinderFunction, c: f64) -> f64 {
    g.values().iter().fold(0.0, |m, v| m.max((v - c).abs()))
}

/// Runs the forward curve from fiber 0 and the pullback curve from −k_n into fiber 0.
pub fn verify_decay(tilde: &Potential, sys: &Fibered, triple: &RpfTriple, cert: &ContractionCertificate, opts: &DecayOptions) -> Result<DecayReport> {
    let seq = &cert.sequences;
    if seq.l.is_empty() {
        return Err(LabError::InsufficientReturns { found: 0, wanted: 1 });
    }
    let certifier = cert.certifier(tilde, sys);
    let r = cert.r;
    let alpha_at = |j: i64| -> Result<f64> { Ok(certifier.constants(j)?.alpha) };
    let f0 = opts.observable.at(sys, 0)?;
    let d_bar = f0.lipschitz(Metric::adjusted(r, alpha_at(0)?)?);
    let d_raw = f0.lipschitz(Metric::raw(r)?);
    let integral = integrate_nu(tilde, sys, triple, &f0)?;
    let (t, c, b) = (cert.t, cert.c, cert.b_threshold);
    let mut violations = Vec::new();

    let mut all = DecayCurve::default();
    let mut along_l = DecayCurve::default();
    let mut g = f0.clone();
    let mut blocks_done = 0usize;
    let mut prod = 1.0;
    let mut monotone = true;
    for n in 0..=opts.horizon {
        if n > 0 {
            g = transfer_apply(tilde, sys, &g)?;
        }
        while blocks_done < seq.l.len() && seq.l[blocks_done] <= n {
            prod = seq.l_products[blocks_done];
            blocks_done += 1;
        }
        let e = gap(&g, integral);
        if let Some(&last) = all.gaps.last() {
            if e > last * (1.0 + SLACK) + SLACK {
                monotone = false;
            }
        }
        let tn = t.powi(blocks_done as i32);
        all.times.push(n);
        all.gaps.push(e);
        all.bounds.push(prod * d_bar);
        all.envelope_c.push(2.0 * c * tn * d_raw);
        all.envelope_b.push(4.0 * b * tn * d_raw);
        if blocks_done > 0 && seq.l[blocks_done - 1] == n {
            along_l.times.push(n);
            along_l.gaps.push(e);
            along_l.bounds.push(prod * d_bar);
            along_l.envelope_c.push(2.0 * c * tn * d_raw);
            along_l.envelope_b.push(4.0 * b * tn * d_raw);
        }
        if e > prod * d_bar * (1.0 + 1e-9) + SLACK {
            violations.push(format!("n = {n}: gap {e:.6e} exceeds the block bound {:.6e}", prod * d_bar));
        }
    }
    if !monotone {
        violations.push("gap curve increases".into());
    }

    let mut along_k = DecayCurve::default();
    for (i, &k) in seq.k.iter().enumerate() {
        let start = -(k as i64);
        let f = opts.observable.at(sys, start)?;
        let db = f.lipschitz(Metric::adjusted(r, alpha_at(start)?)?);
        let dr = f.lipschitz(Metric::raw(r)?);
        let c0 = integrate_nu(tilde, sys, triple, &f)?;
        let mut h = f;
        for _ in 0..k {
            h = transfer_apply(tilde, sys, &h)?;
        }
        let e = gap(&h, c0);
        let bound = seq.k_products[i] * db;
        let tn = t.powi(i as i32 + 1);
        along_k.times.push(k);
        along_k.gaps.push(e);
        along_k.bounds.push(bound);
        along_k.envelope_c.push(2.0 * c * tn * dr);
        along_k.envelope_b.push(4.0 * b * tn * dr);
        if e > bound * (1.0 + 1e-9) + SLACK {
            violations.push(format!("k = {k}: gap {e:.6e} exceeds the block bound {bound:.6e}"));
        }
    }

    let xs: Vec<f64> = all.times.iter().map(|&n| n as f64).collect();
    let fit = fit_exponential(&xs, &all.gaps, opts.floor).ok();
    let (s, c_star) = match fit {
        Some(fit) if d_bar > 0.0 => {
            let s = fit.rate().min(1.0);
            let cs = all.times.iter().zip(&all.gaps).map(|(&n, &e)| e / (s.powi(n as i32) * d_bar)).filter(|v| v.is_finite()).fold(0.0, f64::max);
            (Some(s), Some(cs))
        }
        _ => (None, None),
    };
    let block_rate = if along_l.gaps.iter().filter(|&&e| e > opts.floor).count() >= MIN_FIT_POINTS {
        let idx: Vec<f64> = (1..=along_l.gaps.len()).map(|i| i as f64).collect();
        fit_exponential(&idx, &along_l.gaps, opts.floor).ok().map(|f| f.rate())
    } else {
        None
    };
    let block_rate_exceeds_t = block_rate.is_some_and(|q| q > cert.t_observed + 1e-9);
    Ok(DecayReport { integral, d_bar, d_raw, all, along_l, along_k, fit, s, c_star, block_rate, block_rate_exceeds_t, monotone, violations })
}
