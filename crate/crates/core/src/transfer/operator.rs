use crate::error::{LabError, Result};
use crate::potential::Potential;
use crate::shift::{Fibered, Letter};

use super::{AtomicMeasure, CylinderFunction};

pub const DEFAULT_MAX_DEPTH: usize = 16;

/// Output depth of L applied to a depth-m function: max(m − 1, p − 1, 1).
fn out_depth(m: usize, p: usize) -> usize {
    m.saturating_sub(1).max(p.saturating_sub(1)).max(1)
}

/// L_ω f(x) = Σ_{T y = x} e^{φ_ω(y)} f(y), as a function on the next fiber.
pub fn transfer_apply(phi: &Potential, sys: &Fibered, f: &CylinderFunction) -> Result<CylinderFunction> {
    let n = f.anchor();
    let m = f.depth();
    let d = out_depth(m, phi.depth());
    let out = sys.words(n + 1, d)?;
    let letters = sys.alphabet(n)?.to_vec();
    let path = sys.path();
    let mut buf: Vec<Letter> = Vec::with_capacity(d + 1);
    let mut values = Vec::with_capacity(out.len());
    for w in out.iter() {
        let mut s = 0.0;
        for &a in &letters {
            if !sys.allowed(n, a, w[0])? {
                continue;
            }
            buf.clear();
            buf.push(a);
            buf.extend_from_slice(w);
            let fv = f.value(&buf).ok_or_else(|| LabError::Inadmissible { fiber: n, word: buf.clone() })?;
            if fv != 0.0 {
                s += phi.evaluate(path, n, &buf)?.exp() * fv;
            }
        }
        values.push(s);
    }
    CylinderFunction::new(out, values)
}

/// n-fold composition of the transfer operator along the path.
pub fn transfer_power(phi: &Potential, sys: &Fibered, f: &CylinderFunction, n: usize) -> Result<CylinderFunction> {
    let mut g = f.clone();
    for _ in 0..n {
        g = transfer_apply(phi, sys, &g)?;
    }
    Ok(g)
}

/// Lⁿf(x) = Σ_{v ∈ Wⁿ} e^{S_nφ(τ_v x)} f(τ_v x), summed over inverse branches directly.
pub fn transfer_power_direct(phi: &Potential, sys: &Fibered, f: &CylinderFunction, n: usize) -> Result<CylinderFunction> {
    if n == 0 {
        return Ok(f.clone());
    }
    let a0 = f.anchor();
    let m = f.depth();
    let d = m.saturating_sub(n).max(phi.depth().saturating_sub(1)).max(1);
    let end = a0 + n as i64;
    let out = sys.words(end, d)?;
    let branches = sys.words(a0, n)?;
    let path = sys.path();
    let mut x: Vec<Letter> = Vec::with_capacity(n + d);
    let mut values = Vec::with_capacity(out.len());
    for w in out.iter() {
        let mut s = 0.0;
        for v in branches.iter() {
            if !sys.allowed(end - 1, v[n - 1], w[0])? {
                continue;
            }
            x.clear();
            x.extend_from_slice(v);
            x.extend_from_slice(w);
            let fv = f.value(&x).ok_or_else(|| LabError::Inadmissible { fiber: a0, word: x.clone() })?;
            if fv != 0.0 {
                s += phi.birkhoff(path, a0, &x, n)?.exp() * fv;
            }
        }
        values.push(s);
    }
    CylinderFunction::new(out, values)
}

/// (Lⁿ)*μ for μ on fiber θⁿω: an atom at v·w for every admissible branch v.
pub fn dual_apply(phi: &Potential, sys: &Fibered, mu: &AtomicMeasure, n: usize, max_depth: usize) -> Result<AtomicMeasure> {
    if n == 0 {
        return Ok(mu.clone());
    }
    let m = mu.depth();
    if m + n > max_depth {
        return Err(LabError::Depth(format!("depth {} exceeds the cap {max_depth}", m + n)));
    }
    let end = mu.anchor();
    let start = end - n as i64;
    let branches = sys.words(start, n)?;
    let path = sys.path();
    let tail_len = m.max(phi.depth().saturating_sub(1));
    let mut pairs = Vec::new();
    for (w, weight) in mu.atoms() {
        if weight == 0.0 {
            continue;
        }
        let tail = sys.canonical_extension(end, w, tail_len)?;
        for v in branches.iter() {
            if !sys.allowed(end - 1, v[n - 1], w[0])? {
                continue;
            }
            let mut x = v.to_vec();
            x.extend_from_slice(&tail);
            let e = phi.birkhoff(path, start, &x, n)?.exp();
            x.truncate(n + m);
            pairs.push((x, e * weight));
        }
    }
    AtomicMeasure::from_pairs(start, m + n, pairs)
}

/// One dual step coarsened back to depth D: μ at fiber j+1 on all of W^D
/// becomes the unnormalized L_j*μ on all of W^D at fiber j.
pub fn dual_step(phi: &Potential, sys: &Fibered, mu: &AtomicMeasure) -> Result<AtomicMeasure> {
    let end = mu.anchor();
    let start = end - 1;
    let d = mu.depth();
    let out = sys.words(start, d)?;
    let letters = sys.alphabet(start)?.to_vec();
    let tail_len = d.max(phi.depth().saturating_sub(1));
    let path = sys.path();
    let mut weights = vec![0.0; out.len()];
    let mut x: Vec<Letter> = Vec::with_capacity(tail_len + 1);
    for (w, weight) in mu.atoms() {
        if weight == 0.0 {
            continue;
        }
        let tail = if tail_len > d { sys.canonical_extension(end, w, tail_len)? } else { w.to_vec() };
        for &a in &letters {
            if !sys.allowed(start, a, w[0])? {
                continue;
            }
            x.clear();
            x.push(a);
            x.extend_from_slice(&tail);
            let i = out.find(&x[..d]).ok_or_else(|| LabError::Inadmissible { fiber: start, word: x.clone() })?;
            weights[i] += phi.evaluate(path, start, &x)?.exp() * weight;
        }
    }
    AtomicMeasure::new(out, weights)
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
    fn uniform_potential_preserves_one() {
        let sys = full(2);
        let phi = Potential::constant(-(2.0f64.ln()), 0.5).unwrap();
        let one = CylinderFunction::constant(&sys, 0, 1, 1.0).unwrap();
        let g = transfer_apply(&phi, &sys, &one).unwrap();
        assert!(g.values().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert_eq!(g.anchor(), 1);
    }

    #[test]
    fn coordinate_average() {
        let sys = full(2);
        let phi = Potential::constant(-(2.0f64.ln()), 0.5).unwrap();
        let f = CylinderFunction::from_fn(&sys, 0, 1, |w| w[0] as f64).unwrap();
        let g = transfer_power(&phi, &sys, &f, 2).unwrap();
        assert!(g.values().iter().all(|v| (v - 1.5).abs() < 1e-15));
        assert_eq!(transfer_power(&phi, &sys, &f, 0).unwrap(), f);
    }

    #[test]
    fn dirac_splits_into_preimages() {
        let sys = full(2);
        let phi = Potential::constant(-(2.0f64.ln()), 0.5).unwrap();
        let d = AtomicMeasure::dirac(1, vec![2]).unwrap();
        let m = dual_apply(&phi, &sys, &d, 1, DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(m.anchor(), 0);
        assert_eq!(m.len(), 2);
        assert!(m.weights().iter().all(|w| (w - 0.5).abs() < 1e-15));
        assert!(dual_apply(&phi, &sys, &d, 20, DEFAULT_MAX_DEPTH).is_err());
    }
}
