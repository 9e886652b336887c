//! ψ-mixing coefficients computed exactly from f_a = L̃ᵏ(1_[a]).

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fit::{fit_exponential, ExpFit};
use crate::potential::{available_horizon, index_one_distortion, Potential, DEFAULT_DISTORTION_HORIZON};
use crate::shift::{Fibered, Metric};
use crate::transfer::{integrate_nu, transfer_apply, transfer_power, CylinderFunction, RpfTriple};
use crate::transport::ContractionCertificate;

#[derive(Debug, Clone)]
pub struct MixingOptions {
    /// Longest past word a.
    pub depth: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub depth: usize,
    pub restriction: String,
    pub n: Vec<usize>,
    /// max over a, c of ν(a ∩ T^{−(k+n)}c)/(ν(a)ν(c)) − 1
    pub psi: Vec<f64>,
    /// the same with absolute values
    pub psi_abs: Vec<f64>,
    pub skipped: usize,
    /// max_a D̄(f_a)/ν(a), computed exactly.
    pub direct_constant: f64,
    pub b: f64,
    pub b_prime: f64,
    pub min_image_mass: f64,
    /// B′ max(1, B − 1)/min_u ν(T[u]).
    pub derived_constant: f64,
    /// derived constant × Π t over completed blocks, per n.
    pub bound: Vec<f64>,
    /// 2c × derived constant, the prefactor of tⁿ along l_n.
    pub envelope_constant: f64,
    pub l: Vec<usize>,
    pub l_psi: Vec<f64>,
    pub l_envelope: Vec<f64>,
    pub envelope_holds: bool,
    /// Longest block met along l.
    pub k_max: usize,
    pub t_tilde: f64,
    pub c_tilde: f64,
    pub upgrade_holds: bool,
    pub fit: Option<ExpFit>,
    pub violations: Vec<String>,
}

pub fn psi_mixing(tilde: &Potential, sys: &Fibered, triple: &RpfTriple, cert: &ContractionCertificate, opts: &MixingOptions) -> Result<MixingReport> {
    if opts.depth == 0 {
        return Err(LabError::Config { field: "depths.psi".into(), message: "must be positive".into() });
    }
    let seq = &cert.sequences;
    let certifier = cert.certifier(tilde, sys);
    let here = certifier.constants(0)?;
    let metric = Metric::adjusted(cert.r, here.alpha)?;
    let nu0 = triple.nu(sys, 0)?;

    // f_a at fiber 0 with its mass, for every word a of length k ≤ depth ending at fiber −1
    let mut family: Vec<(CylinderFunction, f64)> = Vec::new();
    let mut skipped = 0usize;
    let mut direct_constant = 0.0f64;
    for k in 1..=opts.depth {
        let start = -(k as i64);
        for a in sys.words(start, k)?.iter() {
            let fa = transfer_power(tilde, sys, &CylinderFunction::indicator(sys, start, a)?, k)?;
            let mass = integrate_nu(tilde, sys, triple, &fa)?;
            if !(mass > 0.0) {
                skipped += 1;
                continue;
            }
            direct_constant = direct_constant.max(fa.lipschitz(metric) / mass);
            family.push((fa, mass));
        }
    }

    let b = here.b;
    let horizon = available_horizon(tilde, sys, 0, DEFAULT_DISTORTION_HORIZON);
    let b_prime = index_one_distortion(tilde, sys, 0, horizon)?.exp();
    let mut min_image_mass = f64::INFINITY;
    for &u in sys.alphabet(-1)? {
        let m: f64 = sys.successors(-1, u)?.iter().map(|&c| nu0.cylinder_mass(&[c])).sum();
        min_image_mass = min_image_mass.min(m);
    }
    let derived_constant = b_prime * (b - 1.0).max(1.0) / min_image_mass;
    let mut violations = Vec::new();
    if direct_constant > derived_constant * (1.0 + 1e-9) {
        violations.push(format!("D̄(f_a)/ν(a) = {direct_constant:.6e} exceeds the derived constant {derived_constant:.6e}"));
    }

    let mut psi = Vec::with_capacity(opts.horizon);
    let mut psi_abs = Vec::with_capacity(opts.horizon);
    let mut bound = Vec::with_capacity(opts.horizon);
    let mut current: Vec<CylinderFunction> = family.iter().map(|p| p.0.clone()).collect();
    let (mut done, mut prod) = (0usize, 1.0);
    for n in 1..=opts.horizon {
        let nu = triple.nu(sys, n as i64)?;
        let (mut hi, mut hi_abs) = (f64::NEG_INFINITY, 0.0f64);
        for (g, (_, mass)) in current.iter_mut().zip(&family) {
            *g = transfer_apply(tilde, sys, g)?;
            let coarse = nu.coarsen(g.depth().min(nu.depth()))?;
            for (c, v) in g.words().iter().zip(g.values()) {
                if coarse.cylinder_mass(c) <= 0.0 {
                    continue;
                }
                let x = v / mass - 1.0;
                hi = hi.max(x);
                hi_abs = hi_abs.max(x.abs());
            }
        }
        while done < seq.l.len() && seq.l[done] <= n {
            prod = seq.l_products[done];
            done += 1;
        }
        let bn = derived_constant * prod;
        if hi < -1.0 - 1e-12 {
            violations.push(format!("n = {n}: ψ̂ = {hi:.6e} below −1"));
        }
        if hi_abs > direct_constant * prod * (1.0 + 1e-9) + 1e-12 {
            violations.push(format!("n = {n}: |ψ̂| = {hi_abs:.6e} exceeds the block bound {:.6e}", direct_constant * prod));
        }
        psi.push(hi);
        psi_abs.push(hi_abs);
        bound.push(bn);
    }

    let envelope_constant = 2.0 * cert.c * derived_constant;
    let (mut l, mut l_psi, mut l_envelope) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &n) in seq.l.iter().enumerate().take_while(|(_, &n)| n <= opts.horizon) {
        l.push(n);
        l_psi.push(psi[n - 1]);
        l_envelope.push(envelope_constant * cert.t.powi(i as i32 + 1));
    }
    let envelope_holds = l_psi.iter().zip(&l_envelope).all(|(p, b)| *p <= b * (1.0 + 1e-9));

    // all-n bound from blocks no longer than K: ψ̂_n ≤ (X/t) t^{n/K}
    let k_max = seq.forward.iter().map(|b| b.len()).max().unwrap_or(1);
    let t_obs = cert.t_observed.max(f64::MIN_POSITIVE);
    let t_tilde = t_obs.powf(1.0 / k_max as f64);
    let c_tilde = derived_constant / t_obs;
    let upgrade_holds = psi_abs.iter().enumerate().all(|(i, p)| {
        let n = i + 1;
        n < k_max || *p <= c_tilde * t_tilde.powi(n as i32) * (1.0 + 1e-9)
    });
    let xs: Vec<f64> = (1..=psi_abs.len()).map(|n| n as f64).collect();
    let fit = fit_exponential(&xs, &psi_abs, 1e-13).ok();
    Ok(MixingReport {
        depth: opts.depth,
        restriction: format!("past words of length ≤ {}; future events are unions of cylinders at fiber n", opts.depth),
        n: (1..=opts.horizon).collect(),
        psi,
        psi_abs,
        skipped,
        direct_constant,
        b,
        b_prime,
        min_image_mass,
        derived_constant,
        bound,
        envelope_constant,
        l,
        l_psi,
        l_envelope,
        envelope_holds,
        k_max,
        t_tilde,
        c_tilde,
        upgrade_holds,
        fit,
        violations,
    })
}
