//! The quadrotor MDP: rigid-body and modular dynamics, observations,
//! rewards and the episode environment.

mod env;
mod model;
mod modular;
mod observe;

use thiserror::Error;

pub use env::*;
pub use model::*;
pub use modular::*;
pub use observe::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("numerical divergence at t = {t:.3} s (state magnitude {magnitude:e})")]
    NumericalDivergence { magnitude: f64, t: f64 },
    #[error("heading command is parallel to the thrust axis")]
    DegenerateHeading,
}
