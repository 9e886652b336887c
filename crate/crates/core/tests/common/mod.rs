#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rpflab_core::driver::{DriverPath, DriverSystem, EventSpec};
use rpflab_core::pipeline::{prepare, PrepareOptions, Prepared};
use rpflab_core::potential::{Potential, Table};
use rpflab_core::shift::{Bip, FiberStructure, Fibered, Letter};

pub const WINDOW: u64 = 1024;

pub fn path(system: DriverSystem, seed: u64) -> Arc<DriverPath> {
    Arc::new(DriverPath::sample(Arc::new(system), WINDOW, seed, 1 << 16).unwrap())
}

/// Full shift on letters 1..=n over a one-state driver.
pub fn full_shift(n: u32) -> Fibered {
    Fibered::new(Arc::new(FiberStructure::full_shift(n, 1).unwrap()), path(DriverSystem::iid(vec![1.0]).unwrap(), 1))
}

/// Stationary two-letter Markov chain: φ(ab) = log(π_a P_ab / π_b), so ν is the chain itself.
pub struct Markov {
    pub p: [[f64; 2]; 2],
    pub pi: [f64; 2],
}

impl Markov {
    pub fn new(p01: f64, p10: f64) -> Self {
        let p = [[1.0 - p01, p01], [p10, 1.0 - p10]];
        let pi = [p10 / (p01 + p10), p01 / (p01 + p10)];
        Self { p, pi }
    }

    pub fn table(&self) -> Table {
        let mut t = HashMap::new();
        for a in 0..2 {
            for b in 0..2 {
                t.insert(vec![a as Letter + 1, b as Letter + 1], (self.pi[a] * self.p[a][b] / self.pi[b]).ln());
            }
        }
        t
    }

    pub fn potential(&self, r: f64) -> Potential {
        Potential::tables(2, r, 2, vec![self.table()]).unwrap()
    }

    /// Second eigenvalue 1 − p01 − p10.
    pub fn lambda2(&self) -> f64 {
        self.p[0][0] + self.p[1][1] - 1.0
    }

    pub fn entropy_rate(&self) -> f64 {
        (0..2).map(|a| -self.pi[a] * self.p[a].iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()).sum()
    }

    /// Pⁿ as a 2×2 array.
    pub fn power(&self, n: usize) -> [[f64; 2]; 2] {
        let mut m = [[1.0, 0.0], [0.0, 1.0]];
        for _ in 0..n {
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    next[i][j] = (0..2).map(|k| m[i][k] * self.p[k][j]).sum();
                }
            }
            m = next;
        }
        m
    }
}

/// Universe {1, 2}: state 0 is the full shift, state 1 forbids 2 → 2; I = {1}.
pub fn golden_structure() -> FiberStructure {
    let bip = Bip { letters: [1].into_iter().collect(), omega_bi: EventSpec::Always, omega_bp: EventSpec::Always };
    FiberStructure::new(vec![1, 2], vec![(vec![1, 2], vec![vec![1, 1], vec![1, 1]]), (vec![1, 2], vec![vec![1, 1], vec![1, 0]])], bip).unwrap()
}

pub fn golden_random(seed: u64) -> Fibered {
    Fibered::new(Arc::new(golden_structure()), path(DriverSystem::iid(vec![0.5, 0.5]).unwrap(), seed))
}

/// Stationary golden mean shift (no 2 → 2).
pub fn golden_mean() -> Fibered {
    let bip = Bip { letters: [1].into_iter().collect(), omega_bi: EventSpec::Always, omega_bp: EventSpec::Always };
    let fs = FiberStructure::stationary(vec![1, 2], vec![vec![1, 1], vec![1, 0]], 1, bip).unwrap();
    Fibered::new(Arc::new(fs), path(DriverSystem::iid(vec![1.0]).unwrap(), 1))
}

/// Potential on depth-2 words with per-state tables drawn from a fixed list.
pub fn depth_two_tables(states: usize, alphabet: &[Letter], scale: f64) -> Vec<Table> {
    (0..states)
        .map(|s| {
            let mut t = HashMap::new();
            for &a in alphabet {
                for &b in alphabet {
                    let v = ((s as f64 + 1.0) * 0.37 * a as f64 + 0.23 * (b as f64) * (s as f64 + 0.5)).sin() * scale;
                    t.insert(vec![a, b], v);
                }
            }
            t
        })
        .collect()
}

/// Three letters, three driver states drawn i.i.d.; each state removes one transition.
pub fn random_three(seed: u64) -> Fibered {
    let letters: BTreeSet<Letter> = [1, 2, 3].into_iter().collect();
    let bip = Bip { letters, omega_bi: EventSpec::Always, omega_bp: EventSpec::Always };
    let fibers = vec![
        (vec![1, 2, 3], vec![vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]]),
        (vec![1, 2, 3], vec![vec![1, 1, 0], vec![1, 1, 1], vec![1, 1, 1]]),
        (vec![1, 2, 3], vec![vec![1, 1, 1], vec![0, 1, 1], vec![1, 1, 1]]),
    ];
    let fs = FiberStructure::new(vec![1, 2, 3], fibers, bip).unwrap();
    Fibered::new(Arc::new(fs), path(DriverSystem::iid(vec![0.5, 0.3, 0.2]).unwrap(), seed))
}

pub fn prepared(phi: &Potential, sys: &Fibered, forward: usize, backward: usize) -> Prepared {
    let opts = PrepareOptions { forward, backward, ..PrepareOptions::default() };
    prepare(phi, sys, &opts).unwrap()
}
