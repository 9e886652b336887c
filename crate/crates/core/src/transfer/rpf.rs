use serde::{Deserialize, Serialize};

use crate::driver::EventSpec;
use crate::error::{LabError, Result};
use crate::potential::{Potential, Table};
use crate::shift::Fibered;

use super::operator::{dual_step, transfer_apply};
use super::{AtomicMeasure, CylinderFunction};

#[derive(Debug, Clone)]
pub struct RpfOptions {
    /// Working depth of the conformal measures.
    pub depth: usize,
    /// Number of fibers used to forget the initial data on each side.
    pub burn_in: usize,
    pub tol: f64,
    /// Returns used for the eigenfunction iterates.
    pub omega_star: EventSpec,
}

impl Default for RpfOptions {
    fn default() -> Self {
        Self { depth: 2, burn_in: 200, tol: 1e-8, omega_star: EventSpec::Always }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpfDiagnostics {
    /// Sup-distance between eigenfunction iterates started at two returns.
    pub h_gap: f64,
    pub h_gap_curve: Vec<f64>,
    pub h_starts: (i64, i64),
    /// Sup-distance between conformal iterates from two initial measures.
    pub mu_gap: f64,
    pub mu_gap_curve: Vec<f64>,
    /// max_j ‖L_j h_j − λ_j h_{j+1}‖∞ / ‖h_{j+1}‖∞
    pub max_residual: f64,
    /// max_j |∫ h_j dμ_j − 1|
    pub max_norm_error: f64,
    /// Path average of ‖log L_j(1)‖∞.
    pub log_l1_average: f64,
}

/// λ_j, h_j and μ_j along fibers `first..=last` (h and μ also at last + 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpfTriple {
    pub first: i64,
    pub last: i64,
    pub log_lambda: Vec<f64>,
    pub h: Vec<CylinderFunction>,
    pub mu: Vec<AtomicMeasure>,
    pub diagnostics: RpfDiagnostics,
}

impl RpfTriple {
    fn slot(&self, j: i64, extra: i64) -> Result<usize> {
        if j < self.first || j > self.last + extra {
            return Err(LabError::OutsidePath { index: j, lo: self.first, hi: self.last + extra });
        }
        Ok((j - self.first) as usize)
    }

    pub fn log_lambda(&self, j: i64) -> Result<f64> {
        Ok(self.log_lambda[self.slot(j, 0)?])
    }

    pub fn lambda(&self, j: i64) -> Result<f64> {
        Ok(self.log_lambda(j)?.exp())
    }

    /// log Λ_k(θʲω) = Σ_{i=j}^{j+k−1} log λ_i
    pub fn log_big_lambda(&self, j: i64, k: usize) -> Result<f64> {
        (j..j + k as i64).map(|i| self.log_lambda(i)).sum()
    }

    pub fn h(&self, j: i64) -> Result<&CylinderFunction> {
        Ok(&self.h[self.slot(j, 1)?])
    }

    pub fn mu(&self, j: i64) -> Result<&AtomicMeasure> {
        Ok(&self.mu[self.slot(j, 1)?])
    }

    /// dν = h dμ at fiber j.
    pub fn nu(&self, sys: &Fibered, j: i64) -> Result<AtomicMeasure> {
        let (h, mu) = (self.h(j)?, self.mu(j)?);
        let w = mu.atoms().map(|(w, x)| Ok(x * h.value_at(sys, w)?)).collect::<Result<Vec<_>>>()?;
        AtomicMeasure::new(mu.words().clone(), w)
    }

    pub fn depth(&self) -> usize {
        self.mu.first().map_or(0, AtomicMeasure::depth)
    }
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Backward conformal chain from `start` down to `stop`, normalized every step.
/// Returns measures for fibers stop..=start (ascending) and log masses for stop..start.
fn conformal_chain(phi: &Potential, sys: &Fibered, init: AtomicMeasure, stop: i64) -> Result<(Vec<AtomicMeasure>, Vec<f64>)> {
    let start = init.anchor();
    let mut measures = vec![init];
    let mut log_masses = Vec::new();
    for _ in stop..start {
        let next = dual_step(phi, sys, measures.last().expect("chain is nonempty"))?;
        let mass = next.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(LabError::NonConvergence { message: "conformal chain lost its mass".into(), gap: f64::NAN, curve: vec![] });
        }
        log_masses.push(mass.ln());
        measures.push(next.scaled(1.0 / mass)?);
    }
    measures.reverse();
    log_masses.reverse();
    Ok((measures, log_masses))
}

/// Forward eigenfunction chain from fiber `start`, normalized by the conformal measures.
fn eigen_chain<'a>(phi: &Potential, sys: &Fibered, start: i64, end: i64, depth: usize, mu: &dyn Fn(i64) -> &'a AtomicMeasure) -> Result<Vec<CylinderFunction>> {
    let mut g = CylinderFunction::constant(sys, start, depth, 1.0)?;
    let mut out = Vec::with_capacity((end - start) as usize);
    for j in start..end {
        g = transfer_apply(phi, sys, &g)?;
        let c = mu(j + 1).integrate(sys, &g)?;
        if !(c > 0.0) {
            return Err(LabError::NonConvergence { message: format!("eigenfunction iterate vanished at fiber {}", j + 1), gap: f64::NAN, curve: vec![] });
        }
        g = g.map(|v| v / c);
        out.push(g.clone());
    }
    Ok(out)
}

/// Solves L_j h_j = λ_j h_{j+1}, L_j* μ_{j+1} = λ_j μ_j, ∫ h_j dμ_j = 1 on `lo..=hi`.
pub fn rpf_solve(phi: &Potential, sys: &Fibered, lo: i64, hi: i64, opts: &RpfOptions) -> Result<RpfTriple> {
    if lo > hi {
        return Err(LabError::Other(format!("empty fiber range [{lo}, {hi}]")));
    }
    let dh = phi.depth().saturating_sub(1).max(1);
    let depth = opts.depth;
    if depth < dh {
        return Err(LabError::Depth(format!("working depth {depth} below eigenfunction depth {dh}")));
    }
    let k = opts.burn_in as i64;
    let returns: Vec<i64> = (1..=k).filter_map(|t| match opts.omega_star.holds(sys.path(), lo - t) {
        Ok(true) => Some(Ok(t)),
        Ok(false) => None,
        Err(e) => Some(Err(e)),
    }).collect::<Result<_>>()?;
    if returns.len() < 2 {
        return Err(LabError::InsufficientReturns { found: returns.len(), wanted: 2 });
    }
    let (k1, k2) = (returns[returns.len() - 1], returns[returns.len() - 2]);
    let (s1, s2) = (lo - k1, lo - k2);

    // conformal measures from far ahead, two initial conditions
    let top = hi + 1 + k;
    let uniform = AtomicMeasure::uniform(sys, top, depth)?;
    let (mu1, log_mass) = conformal_chain(phi, sys, uniform, s1)?;
    let ws = sys.words(top, depth)?;
    let mut point = vec![0.0; ws.len()];
    point[ws.len() - 1] = 1.0;
    let (mu2, _) = conformal_chain(phi, sys, AtomicMeasure::new(ws, point)?, lo)?;
    let mu_at = |j: i64| &mu1[(j - s1) as usize];
    let mut mu_gap_curve = Vec::new();
    let mut mu_gap = 0.0f64;
    for j in (lo..=top).rev() {
        let g = sup_gap(mu_at(j).weights(), mu2[(j - lo) as usize].weights());
        mu_gap_curve.push(g);
        if j <= hi + 1 {
            mu_gap = mu_gap.max(g);
        }
    }

    // eigenfunction iterates started at two returns behind `lo`
    let h1 = eigen_chain(phi, sys, s1, hi + 1, dh, &mu_at)?;
    let h2 = eigen_chain(phi, sys, s2, hi + 1, dh, &mu_at)?;
    let offset = (k1 - k2) as usize;
    let mut h_gap_curve = Vec::with_capacity(h2.len());
    let mut h_gap = 0.0f64;
    for (i, g2) in h2.iter().enumerate() {
        let g = sup_gap(h1[i + offset].values(), g2.values());
        h_gap_curve.push(g);
        if g2.anchor() >= lo {
            h_gap = h_gap.max(g);
        }
    }
    if h_gap >= opts.tol || mu_gap >= opts.tol || !h_gap.is_finite() || !mu_gap.is_finite() {
        let (gap, curve) = if h_gap >= opts.tol { (h_gap, h_gap_curve) } else { (mu_gap, mu_gap_curve) };
        return Err(LabError::NonConvergence { message: format!("RPF iterates on [{lo}, {hi}] did not settle; increase burn-in"), gap, curve });
    }

    let h: Vec<CylinderFunction> = h1[(lo - s1 - 1) as usize..].to_vec();
    let mu: Vec<AtomicMeasure> = mu1[(lo - s1) as usize..=(hi + 1 - s1) as usize].to_vec();
    let log_lambda: Vec<f64> = log_mass[(lo - s1) as usize..=(hi - s1) as usize].to_vec();

    let mut max_residual = 0.0f64;
    let mut max_norm_error = 0.0f64;
    let mut log_l1 = 0.0;
    for j in lo..=hi {
        let i = (j - lo) as usize;
        let lh = transfer_apply(phi, sys, &h[i])?;
        let lam = log_lambda[i].exp();
        let scaled = h[i + 1].map(|v| v * lam);
        max_residual = max_residual.max(lh.sup_distance(sys, &scaled)? / h[i + 1].sup_norm());
        let l1 = transfer_apply(phi, sys, &CylinderFunction::constant(sys, j, 1, 1.0)?)?;
        log_l1 += l1.values().iter().fold(0.0, |m: f64, v| m.max(v.ln().abs()));
    }
    for j in lo..=hi + 1 {
        let i = (j - lo) as usize;
        max_norm_error = max_norm_error.max((mu[i].integrate(sys, &h[i])? - 1.0).abs());
    }
    Ok(RpfTriple {
        first: lo,
        last: hi,
        log_lambda,
        h,
        mu,
        diagnostics: RpfDiagnostics {
            h_gap,
            h_gap_curve,
            h_starts: (s1, s2),
            mu_gap,
            mu_gap_curve,
            max_residual,
            max_norm_error,
            log_l1_average: log_l1 / (hi - lo + 1) as f64,
        },
    })
}

/// φ̃ = φ + log h − log h∘T − log λ, tabulated on fibers `first..=last` of the triple.
pub fn normalize_potential(phi: &Potential, sys: &Fibered, triple: &RpfTriple) -> Result<Potential> {
    let dh = triple.h.first().map_or(1, CylinderFunction::depth);
    let depth = phi.depth().max(dh + 1);
    let path = sys.path();
    let mut tables = Vec::new();
    for j in triple.first..=triple.last {
        let (h0, h1) = (triple.h(j)?, triple.h(j + 1)?);
        if h0.min() <= 0.0 || h1.min() <= 0.0 {
            return Err(LabError::Other(format!("nonpositive eigenfunction at fiber {j}")));
        }
        let lam = triple.log_lambda(j)?;
        let ws = sys.words(j, depth)?;
        let mut t = Table::with_capacity(ws.len());
        for w in ws.iter() {
            let v = phi.evaluate(path, j, w)? + h0.value_at(sys, w)?.ln() - h1.value_at(sys, &w[1..])?.ln() - lam;
            t.insert(w.to_vec(), v);
        }
        tables.push(t);
    }
    let tilde = Potential::by_fiber(depth, phi.r(), phi.index(), path.absolute(triple.first), tables)?;
    for j in triple.first..=triple.last {
        let l1 = transfer_apply(&tilde, sys, &CylinderFunction::constant(sys, j, 1, 1.0)?)?;
        let err = l1.values().iter().fold(0.0, |m: f64, v| m.max((v - 1.0).abs()));
        if err > 1e-8 {
            return Err(LabError::NonConvergence { message: format!("normalized operator misses L(1) = 1 at fiber {j}"), gap: err, curve: vec![] });
        }
    }
    Ok(tilde)
}

/// ∫ f dν_j for the normalized potential `tilde`, pushing f forward until its depth
/// is resolved by the triple's measures; exact because L̃*ν_{j+1} = ν_j.
pub fn integrate_nu(tilde: &Potential, sys: &Fibered, triple: &RpfTriple, f: &CylinderFunction) -> Result<f64> {
    let d = triple.depth();
    let mut g = f.clone();
    while g.depth() > d {
        let next = transfer_apply(tilde, sys, &g)?;
        if next.depth() >= g.depth() {
            return Err(LabError::Depth(format!("depth {} cannot be resolved by measures of depth {d}", g.depth())));
        }
        g = next;
    }
    triple.nu(sys, g.anchor())?.integrate(sys, &g.refine(sys, d)?)
}
