//! The explicit coupling of (L̃ˡ)*δ_x and (L̃ˡ)*δ_y: matched branches v₁·u(x) ↔ v₁·u(y)
//! carry the common mass g(v₁), the remainders are coupled independently.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::potential::Potential;
use crate::shift::{Fibered, Letter, Metric};

use super::certificate::Certifier;
use super::TransportPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub fiber: i64,
    pub n: usize,
    pub m: usize,
    pub plan: TransportPlan,
    /// G = Σ_{v₁} g(v₁), the mass moved along matched branches.
    pub diagonal_mass: f64,
    /// C/B at fiber + n, the guaranteed lower bound for G.
    pub diagonal_bound: f64,
    /// rⁿα at the fiber.
    pub settle: f64,
    /// 1 − (1 − rⁿα) C/B.
    pub s: f64,
    /// Cost under the adjusted metric at the fiber.
    pub cost: f64,
}

/// Branch weights e^{S_l φ(v x)} for every admissible v of length l ending before x.
fn branches(phi: &Potential, sys: &Fibered, k: i64, l: usize, x: &[Letter]) -> Result<Vec<(Vec<Letter>, f64)>> {
    let ws = sys.words(k, l)?;
    let mut out = Vec::new();
    for v in ws.iter() {
        if sys.allowed(k + l as i64 - 1, v[l - 1], x[0])? {
            let mut w = v.to_vec();
            w.extend_from_slice(x);
            let e = phi.birkhoff(sys.path(), k, &w, l)?.exp();
            out.push((w, e));
        }
    }
    Ok(out)
}

/// Builds the coupling for points x, y at fiber k + n + m, given as admissible words there.
pub fn build_coupling(phi: &Potential, sys: &Fibered, certifier: &Certifier, k: i64, n: usize, x: &[Letter], y: &[Letter]) -> Result<Coupling> {
    let here = certifier.constants(k)?;
    let mid = certifier.constants(k + n as i64)?;
    let m = mid.m;
    let l = n + m;
    let end = k + l as i64;
    let q = phi.depth().saturating_sub(1).max(1);
    let d = x.len().max(y.len()).max(q);
    let x = sys.canonical_extension(end, x, d)?;
    let y = sys.canonical_extension(end, y, d)?;
    let settle = certifier.r().powi(n as i32) * here.alpha;
    if settle >= 1.0 {
        return Err(LabError::Other(format!("rⁿα = {settle} ≥ 1 at fiber {k}")));
    }
    let metric = Metric::adjusted(certifier.r(), here.alpha)?;

    // g(v₁) = min_z e^{S_l φ(v₁ u(z) z)} over z ∈ W^q at the end fiber
    let zs = sys.words(end, q)?;
    let mut g = Vec::new();
    let mut buf = Vec::with_capacity(l + q);
    for v1 in sys.words(k, n)?.iter() {
        if !sys.allowed(k + n as i64 - 1, v1[n - 1], mid.o)? {
            continue;
        }
        let mut lo = f64::INFINITY;
        for z in zs.iter() {
            buf.clear();
            buf.extend_from_slice(v1);
            buf.extend_from_slice(mid.u_for(sys, z[0])?);
            buf.extend_from_slice(z);
            lo = lo.min(phi.birkhoff(sys.path(), k, &buf, l)?.exp());
        }
        g.push((v1.to_vec(), lo));
    }
    let diagonal_mass: f64 = g.iter().map(|p| p.1).sum();

    let bx = branches(phi, sys, k, l, &x)?;
    let by = branches(phi, sys, k, l, &y)?;
    let (ux, uy) = (mid.u_for(sys, x[0])?.to_vec(), mid.u_for(sys, y[0])?.to_vec());
    let matched = |v: &[Letter], u: &[Letter]| -> f64 {
        if v[n..l] != *u {
            return 0.0;
        }
        g.iter().find(|p| p.0[..] == v[..n]).map_or(0.0, |p| p.1)
    };
    let rx: Vec<f64> = bx.iter().map(|(w, e)| (e - matched(w, &ux)).max(0.0)).collect();
    let ry: Vec<f64> = by.iter().map(|(w, e)| (e - matched(w, &uy)).max(0.0)).collect();
    let nt = by.len();
    let mut plan = vec![0.0; bx.len() * nt];
    for (v1, gv) in &g {
        let mut a = v1.clone();
        a.extend_from_slice(&ux);
        let mut b = v1.clone();
        b.extend_from_slice(&uy);
        let i = bx.iter().position(|p| p.0[..l] == a[..]);
        let j = by.iter().position(|p| p.0[..l] == b[..]);
        match (i, j) {
            (Some(i), Some(j)) => plan[i * nt + j] += gv,
            _ => return Err(LabError::InvalidStructure(format!("matched branch from {v1:?} is not admissible"))),
        }
    }
    let rest = 1.0 - diagonal_mass;
    if rest > 1e-15 {
        for (i, a) in rx.iter().enumerate() {
            for (j, b) in ry.iter().enumerate() {
                plan[i * nt + j] += a * b / rest;
            }
        }
    }
    let source_weights = bx.iter().map(|p| p.1).collect();
    let target_weights = by.iter().map(|p| p.1).collect();
    let mut tp = TransportPlan {
        anchor: k,
        source: bx.into_iter().map(|p| p.0).collect(),
        target: by.into_iter().map(|p| p.0).collect(),
        source_weights,
        target_weights,
        plan,
        cost: 0.0,
        resolution: metric.level(l + d),
    };
    tp.cost = tp.cost_under(metric);
    let diagonal_bound = mid.c / mid.b;
    let s = 1.0 - (1.0 - settle) * diagonal_bound;
    Ok(Coupling { fiber: k, n, m, cost: tp.cost, plan: tp, diagonal_mass, diagonal_bound, settle, s })
}
