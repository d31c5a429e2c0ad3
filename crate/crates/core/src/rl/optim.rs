use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{RlError, TrainConfig};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n: usize, weight_decay: f64) -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * (mh / (vh.sqrt() + self.eps) + self.weight_decay * params[i]);
        }
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Cosine annealing from `max` to `min`, restarting every `period` steps.
pub fn sgdr(step: usize, period: usize, max: f64, min: f64) -> f64 {
    let period = period.max(1);
    let phase = (step % period) as f64 / period as f64;
    min + 0.5 * (max - min) * (1.0 + (PI * phase).cos())
}

/// Linear interpolation from `start` at step 0 to `end` at `total`.
pub fn linear_decay(step: usize, total: usize, start: f64, end: f64) -> f64 {
    if total == 0 {
        return end;
    }
    let frac = (step.min(total)) as f64 / total as f64;
    start + (end - start) * frac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub explore_sigma: f64,
}

/// Learning rates (warm restarts every quarter of training) and exploration noise.
pub fn schedules(step: usize, total: usize, cfg: &TrainConfig) -> Schedule {
    let period = total / 4;
    Schedule {
        actor_lr: sgdr(step, period, cfg.actor_lr_max, cfg.actor_lr_min),
        critic_lr: sgdr(step, period, cfg.critic_lr_max, cfg.critic_lr_min),
        explore_sigma: linear_decay(step, total, cfg.explore_start, cfg.explore_end),
    }
}

/// `target <- (1 - tau) target + tau online`.
pub fn soft_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<(), RlError> {
    if target.len() != online.len() {
        return Err(RlError::LengthMismatch(target.len(), online.len()));
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_update_cases() {
        let mut t = vec![0.0, 2.0];
        soft_update(&mut t, &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(t, vec![1.0, 1.0]);
        let mut t = vec![0.3, 2.0];
        soft_update(&mut t, &[1.0, 1.0], 0.0).unwrap();
        assert_eq!(t, vec![0.3, 2.0]);
        let mut t = vec![0.0];
        soft_update(&mut t, &[1.0], 0.005).unwrap();
        assert!((t[0] - 0.005).abs() < 1e-15);
        assert_eq!(soft_update(&mut t, &[1.0, 2.0], 0.1), Err(RlError::LengthMismatch(1, 2)));
    }

    #[test]
    fn exploration_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(schedules(0, 1000, &cfg).explore_sigma, 0.3);
        assert!((schedules(1000, 1000, &cfg).explore_sigma - 0.05).abs() < 1e-15);
        assert!((schedules(500, 1000, &cfg).explore_sigma - 0.175).abs() < 1e-15);
    }

    #[test]
    fn cosine_restarts() {
        let cfg = TrainConfig::default();
        let s = schedules(0, 1000, &cfg);
        assert_eq!(s.actor_lr, 3e-4);
        assert_eq!(s.critic_lr, 2e-4);
        let mid = schedules(125, 1000, &cfg).actor_lr;
        assert!((mid - 0.5 * (3e-4 + 1e-5)).abs() < 1e-15);
        assert!(schedules(249, 1000, &cfg).actor_lr < 1.1e-5);
        assert_eq!(schedules(250, 1000, &cfg).actor_lr, 3e-4);
    }

    #[test]
    fn clip_contract() {
        let mut g = vec![300.0, 400.0];
        assert_eq!(clip_grad_norm(&mut g, 100.0), 500.0);
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(n <= 100.0 + 1e-9);
        let mut small = vec![1.0, 2.0];
        clip_grad_norm(&mut small, 100.0);
        assert_eq!(small, vec![1.0, 2.0]);
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut opt = AdamW::new(2, 0.0);
        let mut p = vec![1.0, -1.0];
        opt.step(&mut p, &[0.5, -2.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
        let mut opt = AdamW::new(1, 0.5);
        let mut p = vec![2.0];
        opt.step(&mut p, &[0.0], 0.1);
        assert!((p[0] - 1.9).abs() < 1e-12);
    }
}
