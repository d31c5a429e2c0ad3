use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    action_to_command, apply_command, evaluate_starts, joint_observation, joint_reward, sample_starts, schedules,
    Agent, Architecture, EpisodeStart, ReplayBuffer, RlError, TrainConfig, Transition,
};
use crate::dynamics::{EnvConfig, GoalSpec, QuadEnv, RewardScales};

/// One learning-curve point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub step: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    /// Mean losses since the previous record; NaN when no update ran.
    pub actor_loss: f64,
    pub critic_loss: f64,
}

pub const CURVE_HEADER: [&str; 5] = ["step", "eval_mean", "eval_std", "actor_loss", "critic_loss"];

pub fn write_curve_csv<W: Write>(records: &[CurveRecord], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.eval_mean.to_string(),
            r.eval_std.to_string(),
            r.actor_loss.to_string(),
            r.critic_loss.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(input: R) -> Result<Vec<CurveRecord>, csv::Error> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().collect()
}

/// Trapezoidal area under `eval_mean` divided by the step span.
pub fn area_under_curve(records: &[CurveRecord]) -> f64 {
    match records {
        [] => 0.0,
        [only] => only.eval_mean,
        _ => {
            let span = (records[records.len() - 1].step - records[0].step) as f64;
            let area: f64 = records
                .windows(2)
                .map(|w| 0.5 * (w[0].eval_mean + w[1].eval_mean) * (w[1].step - w[0].step) as f64)
                .sum();
            area / span
        }
    }
}

/// Notifications raised by [`train`].
pub enum TrainEvent<'a> {
    Eval { record: &'a CurveRecord, agent: &'a Agent },
    Diverged { step: usize, agent: &'a Agent },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub curve: Vec<CurveRecord>,
    /// Snapshot with the highest evaluation score and the step it was taken.
    pub best: (usize, f64, Agent),
}

#[derive(Default)]
struct LossAccumulator {
    actor: (f64, usize),
    critic: (f64, usize),
}

impl LossAccumulator {
    fn take(&mut self) -> (f64, f64) {
        let mean = |(s, n): (f64, usize)| if n == 0 { f64::NAN } else { s / n as f64 };
        let out = (mean(self.actor), mean(self.critic));
        *self = Self::default();
        out
    }
}

fn eval_record(
    agent: &Agent,
    env_cfg: &EnvConfig,
    starts: &[EpisodeStart],
    step: usize,
    losses: &mut LossAccumulator,
) -> Result<CurveRecord, RlError> {
    let m = evaluate_starts(agent, env_cfg, starts)?;
    let (actor_loss, critic_loss) = losses.take();
    Ok(CurveRecord { step, eval_mean: m.score_mean, eval_std: m.score_std, actor_loss, critic_loss })
}

/// Evaluation uses nominal parameters and a fixed set of starts.
pub fn eval_config(env_cfg: &EnvConfig) -> EnvConfig {
    EnvConfig { randomize: false, ..*env_cfg }
}

/// Trains an agent on the tracking task given by `goal`.
pub fn train(
    cfg: &TrainConfig,
    env_cfg: &EnvConfig,
    arch: Architecture,
    goal: GoalSpec,
    hook: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    env_cfg.validate().map_err(RlError::InvalidConfig)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent = Agent::new(arch, cfg.weight_decay, &mut rng)?;
    let env_seed: u64 = rng.random();
    let mut env = QuadEnv::new(*env_cfg, env_seed);
    env.set_goal(goal);
    env.reset();

    let eval_cfg = eval_config(env_cfg);
    let starts: Vec<EpisodeStart> = sample_starts(&eval_cfg, cfg.eval_episodes, goal.yaw_rate, cfg.eval_seed)
        .into_iter()
        .map(|s| EpisodeStart { goal, ..s })
        .collect();
    let scales = RewardScales::new(&env_cfg.weights, env_cfg.workspace_bound);
    let (obs_dim, act_dim) = (agent.obs_dim(), agent.act_dim());
    let mut buffer = ReplayBuffer::new(obs_dim, act_dim, cfg.buffer_capacity.min(cfg.total_steps.max(1)));
    let mut losses = LossAccumulator::default();
    let mut updates = 0usize;

    let first = eval_record(&agent, &eval_cfg, &starts, 0, &mut losses)?;
    hook(TrainEvent::Eval { record: &first, agent: &agent });
    let mut best = (0, first.eval_mean, agent.clone());
    let mut curve = vec![first];

    let scale = &env_cfg.obs_scale;
    let mut obs = joint_observation(arch, env.state(), env.goal(), scale);
    for step in 0..cfg.total_steps {
        let sched = schedules(step, cfg.total_steps, cfg);
        let action: Vec<f64> = if step < cfg.warmup_steps {
            (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            let o = nalgebra::DMatrix::from_column_slice(obs_dim, 1, &obs);
            let a = agent.act(&o)?;
            let noise = Normal::new(0.0, sched.explore_sigma.max(f64::MIN_POSITIVE)).expect("positive sigma");
            a.iter().map(|v| (v + noise.sample(&mut rng)).clamp(-1.0, 1.0)).collect()
        };
        let info = match apply_command(&mut env, &action_to_command(arch, &action)) {
            Ok(info) => info,
            Err(source) => {
                hook(TrainEvent::Diverged { step, agent: &agent });
                return Err(RlError::Diverged { step, source });
            }
        };
        let reward = joint_reward(arch, env.state(), env.goal(), &env_cfg.weights, &scales, info.crashed);
        let next_obs = joint_observation(arch, env.state(), env.goal(), scale);
        buffer.push(&Transition { obs, action, reward, next_obs: next_obs.clone(), done: info.crashed });
        obs = if info.crashed || info.truncated {
            env.reset();
            joint_observation(arch, env.state(), env.goal(), scale)
        } else {
            next_obs
        };

        if step + 1 >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut rng)?;
            let c = agent.critic_update(&batch, cfg, sched.critic_lr, &mut rng)?;
            losses.critic.0 += c;
            losses.critic.1 += 1;
            updates += 1;
            if updates.is_multiple_of(cfg.policy_delay) {
                let a = agent.actor_update(&batch, cfg, sched.actor_lr, &mut rng)?;
                losses.actor.0 += a;
                losses.actor.1 += 1;
                agent.soft_update_targets(cfg.tau)?;
            }
        }

        if (step + 1) % cfg.eval_interval == 0 {
            let rec = eval_record(&agent, &eval_cfg, &starts, step + 1, &mut losses)?;
            hook(TrainEvent::Eval { record: &rec, agent: &agent });
            if rec.eval_mean > best.1 {
                best = (rec.step, rec.eval_mean, agent.clone());
            }
            curve.push(rec);
        }
    }
    Ok(TrainOutcome { agent, curve, best })
}
