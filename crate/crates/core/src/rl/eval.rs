use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{joint_observation, Agent, RlError};
use crate::dynamics::{
    normalize_reward, observe_mono, reset, reward_eval, DynamicsError, EnvConfig, GoalSpec, QuadEnv, QuadParams,
    QuadState, RewardScales, StepInfo, TrajectoryRow, WrenchAction,
};
use crate::geometry::{act_goal, act_mono_state, RotElement};
use crate::rl::Architecture;

/// What a controller asks the environment to do for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Mono([f64; 4]),
    Modular([f64; 4], f64),
    Wrench(WrenchAction),
}

pub fn apply_command(env: &mut QuadEnv, cmd: &Command) -> Result<StepInfo, DynamicsError> {
    match cmd {
        Command::Mono(a) => env.step_mono(a),
        Command::Modular(a1, a2) => env.step_modular(a1, *a2),
        Command::Wrench(w) => env.step(w),
    }
}

pub trait Controller {
    fn commands(&self, envs: &[&QuadEnv]) -> Result<Vec<Command>, RlError>;
}

/// Commands the weight of the vehicle with zero moment.
#[derive(Debug, Clone, Copy, Default)]
pub struct HoverOracle;

impl Controller for HoverOracle {
    fn commands(&self, envs: &[&QuadEnv]) -> Result<Vec<Command>, RlError> {
        Ok(envs.iter().map(|e| Command::Wrench(WrenchAction::hover(e.params()))).collect())
    }
}

pub fn action_to_command(arch: Architecture, a: &[f64]) -> Command {
    let a4 = [a[0], a[1], a[2], a[3]];
    if arch.is_modular() {
        Command::Modular(a4, a[4])
    } else {
        Command::Mono(a4)
    }
}

impl Controller for Agent {
    fn commands(&self, envs: &[&QuadEnv]) -> Result<Vec<Command>, RlError> {
        let arch = self.architecture();
        let mut obs = DMatrix::zeros(self.obs_dim(), envs.len());
        for (j, e) in envs.iter().enumerate() {
            let o = joint_observation(arch, e.state(), e.goal(), &e.config().obs_scale);
            obs.column_mut(j).copy_from_slice(&o);
        }
        let a = self.act(&obs)?;
        Ok(a.column_iter().map(|c| action_to_command(arch, c.as_slice())).collect())
    }
}

/// Initial condition of one evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStart {
    pub state: QuadState,
    pub params: QuadParams,
    pub goal: GoalSpec,
}

impl EpisodeStart {
    /// The same episode seen from a frame rotated by `theta` about `e3`.
    pub fn rotated(&self, theta: f64) -> Self {
        let g = RotElement::new(theta);
        Self { state: act_mono_state(&g, &self.state), params: self.params, goal: act_goal(&g, &self.goal) }
    }
}

/// Deterministic starts drawn from the environment's reset distribution.
pub fn sample_starts(config: &EnvConfig, n: usize, yaw_rate: f64, seed: u64) -> Vec<EpisodeStart> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let (state, params) = reset(&mut rng, config.randomize, config);
            EpisodeStart { state, params, goal: GoalSpec::with_yaw_rate(yaw_rate) }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub score_mean: f64,
    pub score_std: f64,
    pub rmse_ex: f64,
    pub rmse_ev: f64,
    pub rmse_eomega: f64,
    pub rmse_eb1: f64,
    pub mean_f: f64,
    pub max_m3: f64,
    pub crashes: usize,
}

pub const METRICS_HEADER: [&str; 11] = [
    "episodes", "yaw_rate", "score_mean", "score_std", "rmse_ex", "rmse_ev", "rmse_eomega", "rmse_eb1", "mean_f",
    "max_m3", "crashes",
];

pub fn write_metrics_csv<W: Write>(m: &EvalMetrics, yaw_rate: f64, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    w.write_record([
        m.episodes.to_string(),
        yaw_rate.to_string(),
        m.score_mean.to_string(),
        m.score_std.to_string(),
        m.rmse_ex.to_string(),
        m.rmse_ev.to_string(),
        m.rmse_eomega.to_string(),
        m.rmse_eb1.to_string(),
        m.mean_f.to_string(),
        m.max_m3.to_string(),
        m.crashes.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Per-episode outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub rows: Vec<TrajectoryRow>,
    /// Sum of normalised evaluation rewards.
    pub ret: f64,
    pub crashed: bool,
}

fn row_for(env: &QuadEnv, info: &StepInfo, reward: f64) -> TrajectoryRow {
    let s = env.state();
    TrajectoryRow {
        t: s.t,
        x: s.x,
        v: s.v,
        r: s.r,
        omega: s.omega,
        f: info.applied.f,
        m: info.applied.m,
        reward,
        crash: info.crashed,
    }
}

/// Runs the episodes in lockstep for `steps` steps (or until each crashes).
/// The first row of each rollout is the initial state with zero wrench.
pub fn run_episodes(
    ctrl: &dyn Controller,
    config: &EnvConfig,
    starts: &[EpisodeStart],
    steps: usize,
) -> Result<Vec<Rollout>, RlError> {
    let scales = RewardScales::new(&config.weights, config.workspace_bound);
    let cfg = EnvConfig { max_steps: usize::MAX, ..*config };
    let mut envs: Vec<QuadEnv> = starts
        .iter()
        .map(|s| {
            let mut e = QuadEnv::new(cfg, 0);
            e.set_goal(s.goal);
            e.reset_to(s.state, s.params);
            e
        })
        .collect();
    let idle = StepInfo { applied: WrenchAction { f: 0.0, m: Default::default() }, crashed: false, truncated: false };
    let mut outs: Vec<Rollout> =
        envs.iter().map(|e| Rollout { rows: vec![row_for(e, &idle, 0.0)], ret: 0.0, crashed: false }).collect();
    for k in 0..steps {
        let active: Vec<usize> = (0..envs.len()).filter(|&i| !outs[i].crashed).collect();
        if active.is_empty() {
            break;
        }
        let refs: Vec<&QuadEnv> = active.iter().map(|&i| &envs[i]).collect();
        let cmds = ctrl.commands(&refs)?;
        for (&i, cmd) in active.iter().zip(&cmds) {
            let info = apply_command(&mut envs[i], cmd).map_err(|source| RlError::Diverged { step: k, source })?;
            let e = &envs[i];
            let o = observe_mono(e.state(), e.goal());
            let r = if info.crashed { 0.0 } else { normalize_reward(reward_eval(&o.e_x, o.e_b1), scales.eval) };
            outs[i].ret += r;
            outs[i].crashed = info.crashed;
            outs[i].rows.push(row_for(e, &info, r));
        }
    }
    Ok(outs)
}

/// Table-style tracking metrics and the normalised evaluation score
/// (episode return divided by the episode length) over `starts`.
pub fn evaluate_starts(
    ctrl: &dyn Controller,
    config: &EnvConfig,
    starts: &[EpisodeStart],
) -> Result<EvalMetrics, RlError> {
    let rollouts = run_episodes(ctrl, config, starts, config.max_steps)?;
    let mut sums = [0.0f64; 5];
    let mut count = 0usize;
    let mut max_m3: f64 = 0.0;
    let scores: Vec<f64> = rollouts.iter().map(|r| r.ret / config.max_steps.max(1) as f64).collect();
    for (ro, start) in rollouts.iter().zip(starts) {
        for row in ro.rows.iter().skip(1) {
            let s = QuadState { x: row.x, v: row.v, r: row.r, omega: row.omega, t: row.t, ..start.state };
            let o = observe_mono(&s, &start.goal);
            sums[0] += o.e_x.norm_squared();
            sums[1] += o.e_v.norm_squared();
            sums[2] += o.e_omega.norm_squared();
            sums[3] += o.e_b1 * o.e_b1;
            sums[4] += row.f;
            max_m3 = max_m3.max(row.m.z.abs());
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    let n = scores.len().max(1) as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalMetrics {
        episodes: starts.len(),
        score_mean: mean,
        score_std: var.sqrt(),
        rmse_ex: (sums[0] / c).sqrt(),
        rmse_ev: (sums[1] / c).sqrt(),
        rmse_eomega: (sums[2] / c).sqrt(),
        rmse_eb1: (sums[3] / c).sqrt(),
        mean_f: sums[4] / c,
        max_m3,
        crashes: rollouts.iter().filter(|r| r.crashed).count(),
    })
}

pub fn evaluate(
    ctrl: &dyn Controller,
    config: &EnvConfig,
    n_episodes: usize,
    yaw_rate: f64,
    seed: u64,
) -> Result<EvalMetrics, RlError> {
    evaluate_starts(ctrl, config, &sample_starts(config, n_episodes, yaw_rate, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InitRanges;
    use crate::rl::Architecture;

    fn still_config() -> EnvConfig {
        EnvConfig {
            randomize: false,
            max_steps: 400,
            init: InitRanges { position: 0.0, velocity: 0.0, angular_velocity: 0.0, attitude: 0.0 },
            ..EnvConfig::default()
        }
    }

    #[test]
    fn hover_oracle_has_zero_error() {
        let cfg = still_config();
        let m = evaluate(&HoverOracle, &cfg, 3, 0.0, 1).unwrap();
        assert_eq!(m.rmse_ex, 0.0);
        assert_eq!(m.rmse_eb1, 0.0);
        assert!((m.mean_f - QuadParams::nominal().weight()).abs() < 1e-9);
        assert_eq!(m.crashes, 0);
        assert!((m.score_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rollout_row_count() {
        let cfg = still_config();
        let starts = sample_starts(&cfg, 1, 0.0, 2);
        let r = run_episodes(&HoverOracle, &cfg, &starts, 200).unwrap();
        assert_eq!(r[0].rows.len(), 201);
    }

    #[test]
    fn rotated_starts_give_identical_metrics_for_equivariant_agent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let agent = Agent::new(Architecture::ModEmlp, 0.0, &mut rng).unwrap();
        let cfg = EnvConfig { max_steps: 300, ..EnvConfig::default() };
        let starts = sample_starts(&cfg, 3, 0.0, 4);
        let rotated: Vec<_> = starts.iter().map(|s| s.rotated(1.1)).collect();
        let a = evaluate_starts(&agent, &cfg, &starts).unwrap();
        let b = evaluate_starts(&agent, &cfg, &rotated).unwrap();
        for (x, y) in [(a.score_mean, b.score_mean), (a.rmse_ex, b.rmse_ex), (a.rmse_eb1, b.rmse_eb1), (a.mean_f, b.mean_f)] {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn metrics_csv_has_fixed_header() {
        let m = evaluate(&HoverOracle, &still_config(), 1, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&m, 0.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("episodes,yaw_rate,score_mean"));
        assert_eq!(text.lines().count(), 2);
    }
}
