//! Applications: random positive matrices, decay of correlations, ψ-mixing and
//! equilibrium states.

mod correlation;
mod equilibrium;
mod matrix;
mod mixing;

use crate::error::Result;
use crate::potential::Potential;
use crate::shift::Fibered;
use crate::transfer::{dual_apply, AtomicMeasure, RpfTriple};

pub use correlation::{correlation_decay, CorrelationOptions, CorrelationReport};
pub use equilibrium::{equilibrium_gap, EquilibriumOptions, EquilibriumReport};
pub use matrix::{matrix_decay_bounds, matrix_rpf, MatrixDecayReport, MatrixRpf, RandomMatrixFamily};
pub use mixing::{psi_mixing, MixingOptions, MixingReport};

/// Largest depth used when lifting measures for exact integration.
pub const APP_MAX_DEPTH: usize = 24;

/// ν at `fiber` on cylinders of length `depth`: the triple's measure coarsened, or pulled
/// back by L̃* from a fiber far enough ahead.
pub fn measure_at_depth(tilde: &Potential, sys: &Fibered, triple: &RpfTriple, fiber: i64, depth: usize) -> Result<AtomicMeasure> {
    let d = triple.depth();
    if depth <= d {
        return triple.nu(sys, fiber)?.coarsen(depth);
    }
    let steps = depth - d;
    let ahead = triple.nu(sys, fiber + steps as i64)?;
    dual_apply(tilde, sys, &ahead, steps, APP_MAX_DEPTH.max(depth))
}
