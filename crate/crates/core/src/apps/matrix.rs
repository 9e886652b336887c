//! Products of random nonnegative matrices as Ruelle operators of depth-2 potentials.

use serde::{Deserialize, Serialize};

use crate::driver::EventSpec;
use crate::error::{LabError, Result};
use crate::fit::{fit_exponential, ExpFit};
use crate::potential::Potential;
use crate::shift::{Fibered, Letter};

/// Per driver state a nonnegative matrix with rows over the state's alphabet and
/// columns over the letter universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomMatrixFamily {
    pub universe: Vec<Letter>,
    pub alphabets: Vec<Vec<Letter>>,
    pub matrices: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConditions {
    pub signum_matches: bool,
    /// Largest p_ij/p_ik over positive entries of a row, over all states.
    pub max_row_ratio: f64,
    /// Largest |log Σ_i p_ij| over columns reachable in the next alphabet.
    pub max_log_column_sum: f64,
}

impl RandomMatrixFamily {
    pub fn potential(&self, r: f64) -> Result<Potential> {
        Potential::log_matrix(self.universe.clone(), self.alphabets.clone(), self.matrices.clone(), r)
    }

    fn column(&self, b: Letter) -> Result<usize> {
        self.universe.binary_search(&b).map_err(|_| LabError::Config { field: "matrices".into(), message: format!("letter {b} not in the universe") })
    }

    /// The block A_j between W¹_j and W¹_{j+1}.
    pub fn block(&self, sys: &Fibered, j: i64) -> Result<Vec<Vec<f64>>> {
        let s = sys.state(j)?;
        let next = sys.alphabet(j + 1)?;
        let rows = &self.matrices[s];
        let cols = next.iter().map(|&b| self.column(b)).collect::<Result<Vec<_>>>()?;
        Ok(rows.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect())
    }

    /// The declared summability conditions, checked against the fiber structure.
    pub fn conditions(&self, sys: &Fibered) -> Result<FamilyConditions> {
        let fs = sys.structure();
        let mut signum_matches = self.matrices.len() == fs.states();
        let mut max_row_ratio = 1.0f64;
        for (s, m) in self.matrices.iter().enumerate().take(fs.states()) {
            if self.alphabets[s] != fs.alphabet(s) {
                signum_matches = false;
            }
            for (i, row) in m.iter().enumerate() {
                let a = self.alphabets[s][i];
                for (c, &p) in row.iter().enumerate() {
                    if (p > 0.0) != fs.entry(s, a, self.universe[c]) {
                        signum_matches = false;
                    }
                }
                let pos: Vec<f64> = row.iter().copied().filter(|&p| p > 0.0).collect();
                if let (Some(hi), Some(lo)) = (pos.iter().copied().reduce(f64::max), pos.iter().copied().reduce(f64::min)) {
                    max_row_ratio = max_row_ratio.max(hi / lo);
                }
            }
        }
        let mut max_log_column_sum = 0.0f64;
        for s in 0..self.matrices.len().min(fs.states()) {
            for (c, _) in self.universe.iter().enumerate() {
                let sum: f64 = self.matrices[s].iter().map(|row| row[c]).sum();
                if sum > 0.0 {
                    max_log_column_sum = max_log_column_sum.max(sum.ln().abs());
                }
            }
        }
        Ok(FamilyConditions { signum_matches, max_row_ratio, max_log_column_sum })
    }
}

/// λ_j, h_j and μ_j for j in `first..=last` (vectors also at last + 1) and the
/// rank-one error curve from fiber 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRpf {
    pub first: i64,
    pub last: i64,
    pub log_lambda: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    /// ‖Λ_n⁻¹ A_0⋯A_{n−1} − μ_0 h_nᵗ‖∞ for n = 1..=horizon.
    pub error_curve: Vec<f64>,
    pub fit: Option<ExpFit>,
}

impl MatrixRpf {
    fn slot(&self, j: i64) -> Result<usize> {
        if j < self.first || j > self.last + 1 {
            return Err(LabError::OutsidePath { index: j, lo: self.first, hi: self.last + 1 });
        }
        Ok((j - self.first) as usize)
    }

    pub fn h(&self, j: i64) -> Result<&[f64]> {
        Ok(&self.h[self.slot(j)?])
    }

    pub fn mu(&self, j: i64) -> Result<&[f64]> {
        Ok(&self.mu[self.slot(j)?])
    }

    pub fn log_lambda(&self, j: i64) -> Result<f64> {
        if j > self.last {
            return Err(LabError::OutsidePath { index: j, lo: self.first, hi: self.last });
        }
        Ok(self.log_lambda[self.slot(j)?])
    }

    /// ν_j = h_j μ_j componentwise.
    pub fn nu(&self, j: i64) -> Result<Vec<f64>> {
        Ok(self.h(j)?.iter().zip(self.mu(j)?).map(|(a, b)| a * b).collect())
    }

    /// Ã_j[i][k] = A_j[i][k] h_j(i) / (λ_j h_{j+1}(k)), column-stochastic.
    pub fn normalized_block(&self, family: &RandomMatrixFamily, sys: &Fibered, j: i64) -> Result<Vec<Vec<f64>>> {
        let a = family.block(sys, j)?;
        let (h0, h1, lam) = (self.h(j)?, self.h(j + 1)?, self.log_lambda(j)?.exp());
        Ok(a.iter().enumerate().map(|(i, row)| row.iter().enumerate().map(|(k, p)| p * h0[i] / (lam * h1[k])).collect()).collect())
    }
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

fn vec_mat(v: &[f64], a: &[Vec<f64>]) -> Vec<f64> {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|k| a.iter().zip(v).map(|(row, x)| row[k] * x).sum()).collect()
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().map(|row| vec_mat(row, b)).collect()
}

fn positive_sum(v: &[f64], what: &str, j: i64) -> Result<f64> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0 && s.is_finite()) || v.iter().any(|&x| x <= 0.0) {
        return Err(LabError::NonConvergence { message: format!("{what} at fiber {j} has a zero entry"), gap: f64::NAN, curve: vec![] });
    }
    Ok(s)
}

/// Forward/backward vector iteration with burn-in on both sides of `lo..=hi`.
pub fn matrix_rpf(family: &RandomMatrixFamily, sys: &Fibered, lo: i64, hi: i64, burn_in: usize, horizon: usize) -> Result<MatrixRpf> {
    if lo > 0 || hi + 1 < horizon as i64 {
        return Err(LabError::Other(format!("window [{lo}, {hi}] must contain 0..{horizon}")));
    }
    if burn_in == 0 {
        return Err(LabError::Other("burn-in must be positive".into()));
    }
    let burn = burn_in as i64;
    // μ backward from hi + 1 + burn
    let mut mu = vec![1.0; sys.alphabet(hi + 1 + burn)?.len()];
    let s = mu.len() as f64;
    mu.iter_mut().for_each(|x| *x /= s);
    let mut mus = Vec::new();
    let mut log_lambda = Vec::new();
    for j in (lo..=hi + burn).rev() {
        let next = mat_vec(&family.block(sys, j)?, &mu);
        let lam = positive_sum(&next, "μ", j)?;
        mu = next.into_iter().map(|x| x / lam).collect();
        if j <= hi + 1 {
            mus.push(mu.clone());
            if j <= hi {
                log_lambda.push(lam.ln());
            }
        }
    }
    mus.reverse();
    log_lambda.reverse();
    // h forward from lo − burn
    let mut h = vec![1.0; sys.alphabet(lo - burn)?.len()];
    let mut hs = Vec::new();
    for j in lo - burn..=hi {
        let next = vec_mat(&h, &family.block(sys, j)?);
        let c = positive_sum(&next, "h", j + 1)?;
        h = next.into_iter().map(|x| x / c).collect();
        if j + 1 >= lo {
            hs.push(h.clone());
        }
    }
    for (h, mu) in hs.iter_mut().zip(&mus) {
        let c: f64 = h.iter().zip(mu).map(|(a, b)| a * b).sum();
        h.iter_mut().for_each(|x| *x /= c);
    }
    let mut out = MatrixRpf { first: lo, last: hi, log_lambda, h: hs, mu: mus, error_curve: Vec::new(), fit: None };

    let mut prod = family.block(sys, 0)?;
    let mut curve = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        if n > 1 {
            prod = mat_mul(&prod, &family.block(sys, n as i64 - 1)?);
        }
        let lam = out.log_lambda(n as i64 - 1)?.exp();
        prod.iter_mut().flatten().for_each(|x| *x /= lam);
        let (m0, hn) = (out.mu(0)?, out.h(n as i64)?);
        let err = prod.iter().enumerate().flat_map(|(i, row)| row.iter().enumerate().map(move |(k, x)| (x - m0[i] * hn[k]).abs())).fold(0.0, f64::max);
        curve.push(err);
    }
    let xs: Vec<f64> = (1..=horizon).map(|n| n as f64).collect();
    out.fit = tail_fit(&xs, &curve);
    out.error_curve = curve;
    Ok(out)
}

/// Exponential fit over the second half of the points above the round-off floor.
fn tail_fit(xs: &[f64], ys: &[f64]) -> Option<ExpFit> {
    let floor = 1e-12 * ys.iter().copied().fold(0.0, f64::max).max(1.0);
    let keep: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] > floor).collect();
    let tail = &keep[keep.len() / 2..];
    let xs: Vec<f64> = tail.iter().map(|&i| xs[i]).collect();
    let ys: Vec<f64> = tail.iter().map(|&i| ys[i]).collect();
    fit_exponential(&xs, &ys, floor).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDecayReport {
    /// min over passages into Ω_bp of min_k Ã_j[o][k].
    pub c: f64,
    /// 1 − C/2
    pub t: f64,
    pub l: Vec<usize>,
    pub l_deviation: Vec<f64>,
    pub k: Vec<usize>,
    pub k_deviation: Vec<f64>,
    /// 4tⁿ at the n-th point of either sequence.
    pub envelope: Vec<f64>,
    pub violations: Vec<String>,
    pub fit: Option<ExpFit>,
}

/// Sup deviations of the products of Ã from ν along l_n and k_n with the 4tⁿ envelope.
pub fn matrix_decay_bounds(family: &RandomMatrixFamily, sys: &Fibered, rpf: &MatrixRpf, horizon: usize) -> Result<MatrixDecayReport> {
    let bp = |n: i64| sys.in_bp(n);
    let full = matches!(sys.structure().bip().omega_bp, EventSpec::Always);
    // C over the passages j → j + 1 ∈ Ω_bp available in the solved window
    let mut c = f64::INFINITY;
    for j in rpf.first..=rpf.last {
        if bp(j + 1)? {
            let a = rpf.normalized_block(family, sys, j)?;
            // row 0 is o = min W¹
            c = c.min(a[0].iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(LabError::Other(format!("no positive row o on passages into the b.p. event (C = {c})")));
    }
    let t = 1.0 - c / 2.0;

    // l_1 = min{n ≥ 2 : θⁿω ∈ Ω_bp}, l_n = l_{n−1} + l_1(θ^{l_{n−1}}ω)
    let first_return = |from: i64, at_least: i64, dir: i64| -> Result<i64> {
        let mut n = at_least;
        while !bp(from + dir * n)? {
            n += 1;
            if n > 4 * horizon as i64 + 64 {
                return Err(LabError::InsufficientReturns { found: 0, wanted: 1 });
            }
        }
        Ok(n)
    };
    let mut l = Vec::new();
    let mut at = 0i64;
    loop {
        let next = at + first_return(at, 2, 1)?;
        if next > horizon as i64 {
            break;
        }
        l.push(next as usize);
        at = next;
    }
    // k_0 = min{n ≥ 1 : θ⁻ⁿω ∈ Ω_bp}, k_n = u(θ^{−k_{n−1}}ω) + k_{n−1}, u = min{n ≥ 2 : …}
    let mut k = Vec::new();
    let mut back = if full { 0 } else { first_return(0, 1, -1)? };
    loop {
        let next = back + first_return(-back, 2, -1)?;
        if next > horizon as i64 {
            break;
        }
        k.push(next as usize);
        back = next;
    }

    let deviation = |start: i64, len: usize| -> Result<f64> {
        let mut p = rpf.normalized_block(family, sys, start)?;
        for j in start + 1..start + len as i64 {
            p = mat_mul(&p, &rpf.normalized_block(family, sys, j)?);
        }
        let nu = rpf.nu(start)?;
        Ok(p.iter().zip(&nu).flat_map(|(row, v)| row.iter().map(move |x| (x - v).abs())).fold(0.0, f64::max))
    };
    let l_deviation = l.iter().map(|&n| deviation(0, n)).collect::<Result<Vec<_>>>()?;
    let k_deviation = k.iter().map(|&n| deviation(-(n as i64), n)).collect::<Result<Vec<_>>>()?;
    let len = l.len().max(k.len());
    let envelope: Vec<f64> = (1..=len).map(|n| 4.0 * t.powi(n as i32)).collect();
    let mut violations = Vec::new();
    for (i, (&n, &d)) in l.iter().zip(&l_deviation).enumerate() {
        if d > envelope[i] + 1e-12 {
            violations.push(format!("l_{} = {n}: deviation {d:.6e} exceeds {:.6e}", i + 1, envelope[i]));
        }
    }
    for (i, (&n, &d)) in k.iter().zip(&k_deviation).enumerate() {
        if d > envelope[i] + 1e-12 {
            violations.push(format!("k_{} = {n}: deviation {d:.6e} exceeds {:.6e}", i + 1, envelope[i]));
        }
    }
    let xs: Vec<f64> = (1..=l.len()).map(|n| n as f64).collect();
    let fit = tail_fit(&xs, &l_deviation);
    Ok(MatrixDecayReport { c, t, l, l_deviation, k, k_deviation, envelope, violations, fit })
}
