use std::ops::Range;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{clip_grad_norm, soft_update, AdamW, Architecture, Batch, RlError, TrainConfig};
use crate::dynamics::{
    normalize_reward, observe_mod1, observe_mod2, observe_mono, reward_mod1, reward_mod2, reward_mono, GoalSpec,
    ObsScale, QuadState, RewardScales, RewardWeights, MOD1_OBS_DIM, MOD2_OBS_DIM, MONO_OBS_DIM,
};
use crate::networks::{Network, NetworkKind, NetworkSpec};

/// Joint observation: the monolithic vector, or the translational block
/// followed by the yaw block.
pub fn joint_observation(arch: Architecture, s: &QuadState, goal: &GoalSpec, k: &ObsScale) -> Vec<f64> {
    if arch.is_modular() {
        let mut o = observe_mod1(s, goal).to_scaled_vec(k);
        o.extend(observe_mod2(s, goal).to_scaled_vec(k));
        o
    } else {
        observe_mono(s, goal).to_scaled_vec(k)
    }
}

/// Normalised training reward. The modular agent's shared critic is
/// trained on the mean of the two module rewards.
pub fn joint_reward(
    arch: Architecture,
    s: &QuadState,
    goal: &GoalSpec,
    w: &RewardWeights,
    scales: &RewardScales,
    crashed: bool,
) -> f64 {
    if arch.is_modular() {
        let r1 = normalize_reward(reward_mod1(&observe_mod1(s, goal), w, crashed), scales.mod1);
        let r2 = normalize_reward(reward_mod2(&observe_mod2(s, goal), w, crashed), scales.mod2);
        0.5 * (r1 + r2)
    } else {
        normalize_reward(reward_mono(&observe_mono(s, goal), w, crashed), scales.mono)
    }
}

pub fn joint_dims(arch: Architecture) -> (usize, usize) {
    if arch.is_modular() {
        (MOD1_OBS_DIM + MOD2_OBS_DIM, 5)
    } else {
        (MONO_OBS_DIM, 4)
    }
}

/// `r + gamma (1 - done) q_next`.
pub fn td_target(reward: f64, done: bool, q_next: f64, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q_next
    }
}

/// One actor and the slices of the joint observation and action it owns.
#[derive(Debug, Clone)]
pub struct ActorSlot {
    pub net: Network,
    pub target: Network,
    pub obs: Range<usize>,
    pub act: Range<usize>,
    opt: AdamW,
}

/// Actors plus a twin critic over the joint observation and action.
#[derive(Debug, Clone)]
pub struct Agent {
    arch: Architecture,
    pub actors: Vec<ActorSlot>,
    pub critics: [Network; 2],
    pub target_critics: [Network; 2],
    critic_opts: [AdamW; 2],
    obs_dim: usize,
    act_dim: usize,
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.rows_mut(0, top.nrows()).copy_from(top);
    m.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    m
}

impl Agent {
    pub fn new(arch: Architecture, weight_decay: f64, rng: &mut impl Rng) -> Result<Self, RlError> {
        let flavor = arch.flavor();
        let (obs_dim, act_dim) = joint_dims(arch);
        let slots: Vec<(NetworkKind, Range<usize>, Range<usize>)> = if arch.is_modular() {
            vec![
                (NetworkKind::ActorMod1, 0..MOD1_OBS_DIM, 0..4),
                (NetworkKind::ActorMod2, MOD1_OBS_DIM..obs_dim, 4..5),
            ]
        } else {
            vec![(NetworkKind::ActorMono, 0..obs_dim, 0..4)]
        };
        let mut actors = Vec::new();
        for (kind, obs, act) in slots {
            let net = Network::build(NetworkSpec::new(kind, flavor), rng)?;
            let opt = AdamW::new(net.n_params(), weight_decay);
            actors.push(ActorSlot { target: net.clone(), net, obs, act, opt });
        }
        let critic_kind = if arch.is_modular() { NetworkKind::CriticCentral } else { NetworkKind::CriticMono };
        let c1 = Network::build(NetworkSpec::new(critic_kind, flavor), rng)?;
        let c2 = Network::build(NetworkSpec::new(critic_kind, flavor), rng)?;
        let critic_opts = [AdamW::new(c1.n_params(), weight_decay), AdamW::new(c2.n_params(), weight_decay)];
        Ok(Self {
            arch,
            target_critics: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actors,
            critic_opts,
            obs_dim,
            act_dim,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Deterministic joint action for each column of `obs`.
    pub fn act(&self, obs: &DMatrix<f64>) -> Result<DMatrix<f64>, RlError> {
        self.joint_action(obs, false)
    }

    fn joint_action(&self, obs: &DMatrix<f64>, target: bool) -> Result<DMatrix<f64>, RlError> {
        let mut out = DMatrix::zeros(self.act_dim, obs.ncols());
        for slot in &self.actors {
            let net = if target { &slot.target } else { &slot.net };
            let a = net.predict(&obs.rows(slot.obs.start, slot.obs.len()).into_owned())?;
            out.rows_mut(slot.act.start, slot.act.len()).copy_from(&a);
        }
        Ok(out)
    }

    pub fn q_value(&self, obs: &DMatrix<f64>, action: &DMatrix<f64>) -> Result<DMatrix<f64>, RlError> {
        Ok(self.critics[0].predict(&stack(obs, action))?)
    }

    /// Bellman targets with target-policy smoothing.
    pub fn targets(&self, batch: &Batch, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Vec<f64>, RlError> {
        let mut a_next = self.joint_action(&batch.next_obs, true)?;
        if cfg.target_noise > 0.0 {
            let noise = Normal::new(0.0, cfg.target_noise).expect("positive sigma");
            for a in a_next.iter_mut() {
                let e: f64 = noise.sample(rng);
                *a = (*a + e.clamp(-cfg.noise_clip, cfg.noise_clip)).clamp(-1.0, 1.0);
            }
        }
        let x = stack(&batch.next_obs, &a_next);
        let q1 = self.target_critics[0].predict(&x)?;
        let q2 = self.target_critics[1].predict(&x)?;
        Ok((0..batch.len())
            .map(|i| td_target(batch.reward[i], batch.done[i], q1[i].min(q2[i]), cfg.gamma))
            .collect())
    }

    /// Regresses both critics onto the TD targets. Returns the mean of the
    /// two mean-squared TD errors.
    pub fn critic_update(
        &mut self,
        batch: &Batch,
        cfg: &TrainConfig,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Result<f64, RlError> {
        if batch.is_empty() {
            return Err(RlError::EmptyBuffer);
        }
        let y = self.targets(batch, cfg, rng)?;
        let x = stack(&batch.obs, &batch.action);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(self.critic_opts.iter_mut()) {
            let q = critic.forward(&x)?;
            let diff = DMatrix::from_fn(1, batch.len(), |_, j| q[j] - y[j]);
            loss += diff.norm_squared() / n;
            let g = critic.backward(&(diff * (2.0 / n)))?;
            let mut grad = g.params;
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            let mut p = critic.params();
            opt.step(&mut p, &grad, lr);
            critic.set_params(&p)?;
        }
        Ok(0.5 * loss)
    }

    /// Deterministic policy gradient through the first critic with temporal,
    /// spatial and magnitude smoothness penalties. Each actor replaces only
    /// its own slice of the stored joint action. Returns the mean actor loss.
    pub fn actor_update(
        &mut self,
        batch: &Batch,
        cfg: &TrainConfig,
        lr: f64,
        rng: &mut impl Rng,
    ) -> Result<f64, RlError> {
        let b = batch.len();
        if b == 0 {
            return Err(RlError::EmptyBuffer);
        }
        let n = b as f64;
        let spatial = Normal::new(0.0, cfg.sigma_s.max(f64::MIN_POSITIVE)).expect("positive sigma");
        let mut total = 0.0;
        for k in 0..self.actors.len() {
            let (obs_r, act_r) = (self.actors[k].obs.clone(), self.actors[k].act.clone());
            let o = batch.obs.rows(obs_r.start, obs_r.len()).into_owned();
            let o_next = batch.next_obs.rows(obs_r.start, obs_r.len()).into_owned();
            let o_noisy = o.map(|v| v + if cfg.sigma_s > 0.0 { spatial.sample(rng) } else { 0.0 });
            let mut x = DMatrix::zeros(o.nrows(), 3 * b);
            x.columns_mut(0, b).copy_from(&o);
            x.columns_mut(b, b).copy_from(&o_next);
            x.columns_mut(2 * b, b).copy_from(&o_noisy);
            let y = self.actors[k].net.forward(&x)?;
            let a = y.columns(0, b).into_owned();
            let d_t = &a - y.columns(b, b);
            let d_s = &a - y.columns(2 * b, b);

            let mut joint = batch.action.clone();
            joint.rows_mut(act_r.start, act_r.len()).copy_from(&a);
            let critic = &mut self.critics[0];
            let q = critic.forward(&stack(&batch.obs, &joint))?;
            let dq = critic.backward_input(&DMatrix::from_element(1, b, -1.0 / n))?;
            critic.clear_tape();
            let dq_da = dq.rows(self.obs_dim + act_r.start, act_r.len()).into_owned();

            let loss = -q.sum() / n
                + cfg.lambda_t * d_t.norm_squared() / n
                + cfg.lambda_s * d_s.norm_squared() / n
                + cfg.lambda_m * a.norm_squared() / n;
            total += loss;

            let mut g = DMatrix::zeros(a.nrows(), 3 * b);
            let g_t = &d_t * (2.0 * cfg.lambda_t / n);
            let g_s = &d_s * (2.0 * cfg.lambda_s / n);
            g.columns_mut(0, b).copy_from(&(dq_da + &g_t + &g_s + &a * (2.0 * cfg.lambda_m / n)));
            g.columns_mut(b, b).copy_from(&(-g_t));
            g.columns_mut(2 * b, b).copy_from(&(-g_s));

            let slot = &mut self.actors[k];
            let mut grad = slot.net.backward(&g)?.params;
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            let mut p = slot.net.params();
            slot.opt.step(&mut p, &grad, lr);
            slot.net.set_params(&p)?;
        }
        Ok(total / self.actors.len() as f64)
    }

    /// Polyak averaging of every target network.
    pub fn soft_update_targets(&mut self, tau: f64) -> Result<(), RlError> {
        for slot in self.actors.iter_mut() {
            let mut t = slot.target.params();
            soft_update(&mut t, &slot.net.params(), tau)?;
            slot.target.set_params(&t)?;
        }
        for (target, online) in self.target_critics.iter_mut().zip(&self.critics) {
            let mut t = target.params();
            soft_update(&mut t, &online.params(), tau)?;
            target.set_params(&t)?;
        }
        Ok(())
    }

    /// Every network in a fixed order: each actor then its target, then
    /// both critics, then both target critics.
    pub fn networks(&self) -> Vec<(String, &Network)> {
        let mut out = Vec::new();
        for (i, slot) in self.actors.iter().enumerate() {
            out.push((format!("actor{i}"), &slot.net));
            out.push((format!("actor{i}_target"), &slot.target));
        }
        out.push(("critic0".into(), &self.critics[0]));
        out.push(("critic1".into(), &self.critics[1]));
        out.push(("critic0_target".into(), &self.target_critics[0]));
        out.push(("critic1_target".into(), &self.target_critics[1]));
        out
    }

    pub fn networks_mut(&mut self) -> Vec<&mut Network> {
        let mut out = Vec::new();
        for slot in self.actors.iter_mut() {
            out.push(&mut slot.net);
            out.push(&mut slot.target);
        }
        let [c0, c1] = &mut self.critics;
        let [t0, t1] = &mut self.target_critics;
        out.extend([c0, c1, t0, t1]);
        out
    }
}
