//! Symmetry-aware reinforcement learning for quadrotor low-level control.
//!
//! - [`geometry`]: SO(3) helpers and the rotation/reflection group actions.
//! - [`dynamics`]: rigid-body simulator, modular decomposition, rewards, episodes.
//! - [`equivariance`]: group representations and equivariant linear layers.
//! - [`networks`]: actor/critic networks with reverse-mode gradients.
//! - [`rl`]: TD3 and centralised-critic TD3 training and evaluation.

pub mod dynamics;
pub mod equivariance;
pub mod geometry;
pub mod networks;
pub mod rl;
