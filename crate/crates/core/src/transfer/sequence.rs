//! Non-stationary check: an explicit list of fibers and normalized potentials,
//! its invariant sequence of measures and the decay along the block checkpoints.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::driver::{DriverPath, EventSpec};
use crate::error::{LabError, Result};
use crate::potential::{Potential, Table};
use crate::shift::{Bip, FiberStructure, Fibered, Letter, Metric};
use crate::transport::{contraction_constants, CertificateOptions};

use super::operator::{dual_step, transfer_apply};
use super::{rpf_solve, CylinderFunction, Observable, RpfOptions};

/// One entry of the list: alphabet, 0/1 rows over the universe, potential table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFiber {
    pub alphabet: Vec<Letter>,
    pub matrix: Vec<Vec<u8>>,
    pub potential: Table,
}

#[derive(Debug, Clone)]
pub struct SequenceSpec {
    pub universe: Vec<Letter>,
    pub fibers: Vec<SequenceFiber>,
    pub bip_letters: BTreeSet<Letter>,
    pub depth: usize,
    pub r: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub period: usize,
    /// max_k ‖L_k 1 − 1‖∞
    pub normalization_error: f64,
    /// max_k |log λ_k| of the solved triple; 0 for normalized lists.
    pub max_log_lambda: f64,
    /// max_k sup |L_k*μ_{k+1} − μ_k|
    pub invariance_residual: f64,
    pub integral: f64,
    pub d_bar: f64,
    pub checkpoints: Vec<usize>,
    pub gaps: Vec<f64>,
    pub bounds: Vec<f64>,
    pub t_max: f64,
    pub monotone: bool,
}

fn clause(name: &str, message: String) -> LabError {
    LabError::InvalidStructure(format!("clause {name}: {message}"))
}

/// Checks the preconditions (b.p.-property, L_k 1 = 1), builds the invariant sequence by
/// backward dual iteration and records ‖L_0^{p_j} f − ∫f dμ_0‖∞ at p_{j+1} = p_j + l_{p_j}.
pub fn invariant_sequence_check(spec: &SequenceSpec, f: &Observable, horizon: usize) -> Result<SequenceReport> {
    let k = spec.fibers.len();
    if k == 0 {
        return Err(clause("structure", "empty list".into()));
    }
    let bip = Bip { letters: spec.bip_letters.clone(), omega_bi: EventSpec::Always, omega_bp: EventSpec::Always };
    let fs = FiberStructure::new(spec.universe.clone(), spec.fibers.iter().map(|x| (x.alphabet.clone(), x.matrix.clone())).collect(), bip)?;
    for s in 0..k {
        if let Some(v) = fs.check_pair(s, (s + 1) % k).into_iter().next() {
            return Err(clause("b.p.-property", format!("fibers {s} → {}: {}", (s + 1) % k, v.message)));
        }
    }
    let burn = 64 + 4 * k;
    let span = horizon + 2 * burn + 64;
    let origin = burn + 16;
    let states: Vec<usize> = (0..span + origin).map(|i| (i + k * span - origin) % k).collect();
    let sys = Fibered::new(Arc::new(fs), Arc::new(DriverPath::explicit(states, origin)?));
    let phi = Potential::tables(spec.depth, spec.r, spec.index, spec.fibers.iter().map(|x| x.potential.clone()).collect())?;

    // L_k 1 = 1 on every list entry
    let mut normalization_error = 0.0f64;
    for j in 0..k as i64 {
        let l1 = transfer_apply(&phi, &sys, &CylinderFunction::constant(&sys, j, 1, 1.0)?)?;
        normalization_error = normalization_error.max(l1.values().iter().fold(0.0, |m, v| m.max((v - 1.0).abs())));
    }
    if normalization_error > 1e-10 {
        return Err(clause("normalization", format!("‖L1 − 1‖∞ = {normalization_error:e}")));
    }

    let hi = horizon as i64 + 1;
    let opts = RpfOptions { depth: spec.depth.saturating_sub(1).max(1), burn_in: burn, ..RpfOptions::default() };
    let triple = rpf_solve(&phi, &sys, 0, hi, &opts)?;
    let max_log_lambda = triple.log_lambda.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let mut invariance_residual = 0.0f64;
    for j in 0..=hi {
        let pulled = dual_step(&phi, &sys, triple.mu(j + 1)?)?;
        invariance_residual = invariance_residual.max(pulled.sup_distance(&sys, triple.mu(j)?)?);
    }

    // ∫ f dμ_0, exact once the pushed function is resolved by the measures
    let f0 = f.at(&sys, 0)?;
    let mut g = f0.clone();
    while g.depth() > triple.depth() {
        g = transfer_apply(&phi, &sys, &g)?;
    }
    let integral = triple.mu(g.anchor())?.integrate(&sys, &g.refine(&sys, triple.depth())?)?;

    let cert = contraction_constants(&phi, &sys, 0, hi, &CertificateOptions::default())?;
    let certifier = cert.certifier(&phi, &sys);
    let d_bar = f0.lipschitz(Metric::adjusted(spec.r, certifier.constants(0)?.alpha)?);
    let (mut checkpoints, mut gaps, mut bounds) = (vec![0usize], Vec::new(), Vec::new());
    let gap = |g: &CylinderFunction| g.values().iter().fold(0.0, |m: f64, v| m.max((v - integral).abs()));
    gaps.push(gap(&f0));
    bounds.push(d_bar);
    let (mut p, mut prod, mut t_max) = (0usize, 1.0, 0.0f64);
    let mut g = f0;
    loop {
        let block = cert.block(&certifier, p as i64)?;
        if p + block.len() > horizon {
            break;
        }
        for _ in 0..block.len() {
            g = transfer_apply(&phi, &sys, &g)?;
        }
        p += block.len();
        prod *= block.t;
        t_max = t_max.max(block.t);
        checkpoints.push(p);
        gaps.push(gap(&g));
        bounds.push(prod * d_bar);
    }
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
    Ok(SequenceReport {
        period: k,
        normalization_error,
        max_log_lambda,
        invariance_residual,
        integral,
        d_bar,
        checkpoints,
        gaps,
        bounds,
        t_max,
        monotone,
    })
}
