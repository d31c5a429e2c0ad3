//! Representations of the rotation group about `e3` and the sign-flip group,
//! equivariant layer synthesis and symmetry checks.

mod basis;
mod linear;
mod nonlinear;
mod representation;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use basis::*;
pub use linear::*;
pub use nonlinear::*;
pub use representation::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquivarianceError {
    #[error("representations are over different groups")]
    MixedGroups,
    #[error("direct sum of an empty list")]
    EmptyDirectSum,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Largest `|f(rho_in(g) x) - rho_out(g) f(x)|_inf` over `n_samples` random
/// pairs with Gaussian `x`. Deterministic given `seed`.
pub fn check_equivariance(
    mut f: impl FnMut(&DVector<f64>) -> DVector<f64>,
    rho_in: &Representation,
    rho_out: &Representation,
    n_samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples.max(1) {
        let g = GroupElement::random(rho_in.group(), &mut rng);
        let x = DVector::from_fn(rho_in.dim(), |_, _| StandardNormal.sample(&mut rng));
        let lhs = f(&(rho_in.matrix(&g) * &x));
        let rhs = rho_out.matrix(&g) * f(&x);
        worst = worst.max((lhs - rhs).amax());
    }
    worst
}
