//! The common preparation shared by the experiments: RPF triple, normalized
//! potential and contraction certificate with its return sequences.

use crate::error::Result;
use crate::potential::Potential;
use crate::shift::Fibered;
use crate::transfer::{normalize_potential, rpf_solve, RpfOptions, RpfTriple};
use crate::transport::{contraction_constants, return_sequences, CertificateOptions, ContractionCertificate};

#[derive(Debug, Clone)]
pub struct PrepareOptions {
    /// Largest forward time used by the experiments.
    pub forward: usize,
    /// Largest backward start −k used by the experiments.
    pub backward: usize,
    /// Extra fibers solved on both sides of the certified window.
    pub margin: usize,
    pub rpf: RpfOptions,
    pub certificate: CertificateOptions,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self { forward: 40, backward: 40, margin: 48, rpf: RpfOptions::default(), certificate: CertificateOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub triple: RpfTriple,
    pub tilde: Potential,
    pub cert: ContractionCertificate,
}

/// Solves the triple on [−backward − margin, forward + margin], normalizes φ and
/// certifies contraction on [−backward, forward].
pub fn prepare(phi: &Potential, sys: &Fibered, opts: &PrepareOptions) -> Result<Prepared> {
    let lo = -((opts.backward + opts.margin) as i64);
    let hi = (opts.forward + opts.margin) as i64;
    let mut rpf = opts.rpf.clone();
    rpf.depth = rpf.depth.max(phi.depth().saturating_sub(1).max(1));
    let triple = rpf_solve(phi, sys, lo, hi, &rpf)?;
    let tilde = normalize_potential(phi, sys, &triple)?;
    let mut cert = contraction_constants(&tilde, sys, -(opts.backward as i64), opts.forward as i64, &opts.certificate)?;
    return_sequences(&tilde, sys, &mut cert, opts.forward, opts.backward)?;
    Ok(Prepared { triple, tilde, cert })
}
