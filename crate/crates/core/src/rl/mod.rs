//! TD3 for the monolithic agent and centralised-critic TD3 for the
//! two-module agent.

mod agent;
mod buffer;
mod eval;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::networks::{Flavor, NetworkError};

pub use agent::*;
pub use buffer::*;
pub use eval::*;
pub use optim::*;
pub use train::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RlError {
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("parameter length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged at step {step}: {source}")]
    Diverged { step: usize, source: DynamicsError },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "mono-mlp")]
    MonoMlp,
    #[serde(rename = "mono-emlp")]
    MonoEmlp,
    #[serde(rename = "mod-mlp")]
    ModMlp,
    #[serde(rename = "mod-emlp")]
    ModEmlp,
}

impl Architecture {
    pub const ALL: [Architecture; 4] =
        [Architecture::MonoMlp, Architecture::MonoEmlp, Architecture::ModMlp, Architecture::ModEmlp];

    pub fn is_modular(&self) -> bool {
        matches!(self, Architecture::ModMlp | Architecture::ModEmlp)
    }

    pub fn flavor(&self) -> Flavor {
        match self {
            Architecture::MonoEmlp | Architecture::ModEmlp => Flavor::Equivariant,
            _ => Flavor::Baseline,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::MonoMlp => "mono-mlp",
            Architecture::MonoEmlp => "mono-emlp",
            Architecture::ModMlp => "mod-mlp",
            Architecture::ModEmlp => "mod-emlp",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown architecture `{s}` (expected mono-mlp, mono-emlp, mod-mlp or mod-emlp)"))
    }
}

/// TD3 hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub seed: u64,
    pub gamma: f64,
    pub actor_lr_max: f64,
    pub actor_lr_min: f64,
    pub critic_lr_max: f64,
    pub critic_lr_min: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub tau: f64,
    pub explore_start: f64,
    pub explore_end: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub policy_delay: usize,
    pub warmup_steps: usize,
    pub lambda_t: f64,
    pub lambda_s: f64,
    pub sigma_s: f64,
    pub lambda_m: f64,
    pub max_grad_norm: f64,
    pub weight_decay: f64,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub eval_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 100_000,
            seed: 0,
            gamma: 0.99,
            actor_lr_max: 3e-4,
            actor_lr_min: 1e-5,
            critic_lr_max: 2e-4,
            critic_lr_min: 1e-5,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            tau: 0.005,
            explore_start: 0.3,
            explore_end: 0.05,
            target_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            warmup_steps: 5000,
            lambda_t: 0.4,
            lambda_s: 0.3,
            sigma_s: 0.05,
            lambda_m: 0.6,
            max_grad_norm: 100.0,
            weight_decay: 0.01,
            eval_interval: 2000,
            eval_episodes: 10,
            eval_seed: 12345,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        let rates = [self.actor_lr_max, self.actor_lr_min, self.critic_lr_max, self.critic_lr_min];
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("learning rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.noise_clip < 0.0 || self.target_noise < 0.0 || self.explore_start < 0.0 || self.explore_end < 0.0 {
            return bad("noise scales must be non-negative");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size must be positive and no larger than buffer_capacity");
        }
        if self.policy_delay == 0 || self.eval_interval == 0 || self.eval_episodes == 0 {
            return bad("policy_delay, eval_interval and eval_episodes must be positive");
        }
        if [self.lambda_t, self.lambda_s, self.sigma_s, self.lambda_m, self.weight_decay].iter().any(|v| *v < 0.0) {
            return bad("regularisation weights must be non-negative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        Ok(())
    }
}
