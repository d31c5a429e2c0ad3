//! Episode lifecycle: initial-state sampling, domain randomisation, crash
//! detection, action scaling and trajectory export.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{saturate, step, GoalSpec, IntegralDecay, QuadParams, QuadState, WrenchAction, DEFAULT_DT};
use super::modular::{assemble_wrench, TransAction};
use super::observe::{ObsScale, RewardWeights};
use super::DynamicsError;
use crate::geometry::{exp_so3, Mat3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitRanges {
    /// Half-width of the initial position box (m).
    pub position: f64,
    pub velocity: f64,
    pub angular_velocity: f64,
    /// Half-width of the axis-angle attitude perturbation (rad).
    pub attitude: f64,
}

impl Default for InitRanges {
    fn default() -> Self {
        Self { position: 0.5, velocity: 0.2, angular_velocity: 0.2, attitude: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub dt: f64,
    pub workspace_bound: f64,
    pub max_steps: usize,
    pub randomize: bool,
    /// Relative half-width of the parameter randomisation.
    pub randomization_range: f64,
    pub decay: IntegralDecay,
    pub weights: RewardWeights,
    pub obs_scale: ObsScale,
    pub init: InitRanges,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            workspace_bound: 3.0,
            max_steps: 2000,
            randomize: true,
            randomization_range: 0.1,
            decay: IntegralDecay::default(),
            weights: RewardWeights::default(),
            obs_scale: ObsScale::default(),
            init: InitRanges::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("env.dt must be positive".into());
        }
        if !(self.workspace_bound > 0.0) {
            return Err("env.workspace_bound must be positive".into());
        }
        if self.max_steps == 0 {
            return Err("env.max_steps must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.randomization_range) {
            return Err("env.randomization_range must lie in [0, 1)".into());
        }
        if !(self.decay.alpha > 0.0 && self.decay.beta > 0.0) {
            return Err("integral decay rates must be positive".into());
        }
        Ok(())
    }
}

fn uniform_vec(rng: &mut impl Rng, half: f64) -> Vec3 {
    if half == 0.0 {
        return Vec3::zeros();
    }
    Vec3::new(rng.random_range(-half..=half), rng.random_range(-half..=half), rng.random_range(-half..=half))
}

/// Samples physical parameters within `+-range` of nominal. `J1 == J2` is kept.
pub fn sample_params(rng: &mut impl Rng, range: f64) -> QuadParams {
    let nominal = QuadParams::nominal();
    if range == 0.0 {
        return nominal;
    }
    let mut factor = || rng.random_range(1.0 - range..=1.0 + range);
    let j12 = nominal.inertia.x * factor();
    let j3 = nominal.inertia.z * factor();
    QuadParams {
        mass: nominal.mass * factor(),
        arm_length: nominal.arm_length * factor(),
        inertia: Vec3::new(j12, j12, j3),
        c_tf: nominal.c_tf * factor(),
        c_tw: nominal.c_tw * factor(),
        gravity: nominal.gravity,
    }
}

pub fn sample_state(rng: &mut impl Rng, init: &InitRanges) -> QuadState {
    QuadState {
        x: uniform_vec(rng, init.position),
        v: uniform_vec(rng, init.velocity),
        r: exp_so3(&uniform_vec(rng, init.attitude)),
        omega: uniform_vec(rng, init.angular_velocity),
        e_ix: Vec3::zeros(),
        e_ib1: 0.0,
        t: 0.0,
    }
}

/// Initial state and parameters for a new episode.
pub fn reset(rng: &mut impl Rng, randomize: bool, config: &EnvConfig) -> (QuadState, QuadParams) {
    let params = if randomize {
        sample_params(rng, config.randomization_range)
    } else {
        QuadParams::nominal()
    };
    (sample_state(rng, &config.init), params)
}

/// Out of the workspace cylinder, or thrust axis pointing up.
pub fn crash_check(s: &QuadState, bound: f64) -> bool {
    let horizontal = (s.x.x * s.x.x + s.x.y * s.x.y).sqrt();
    horizontal > bound || s.x.z.abs() > bound || s.r[(2, 2)] < 0.0
}

/// Affine bijection between `[-1, 1]^4` and `f in [0, f_max]`, `|M_i| <= M_max_i`.
pub fn denormalize_action(a: &[f64; 4], p: &QuadParams) -> WrenchAction {
    let m_max = p.moment_max();
    WrenchAction {
        f: 0.5 * (a[0] + 1.0) * p.thrust_max(),
        m: Vec3::new(a[1] * m_max.x, a[2] * m_max.y, a[3] * m_max.z),
    }
}

pub fn normalize_action(w: &WrenchAction, p: &QuadParams) -> [f64; 4] {
    let m_max = p.moment_max();
    [2.0 * w.f / p.thrust_max() - 1.0, w.m.x / m_max.x, w.m.y / m_max.y, w.m.z / m_max.z]
}

/// Translational-module action: one scale for all of `tau`, so the map
/// commutes with rotations.
pub fn denormalize_mod1(a: &[f64], p: &QuadParams) -> TransAction {
    let tau_max = p.moment_max().x;
    TransAction {
        f: 0.5 * (a[0] + 1.0) * p.thrust_max(),
        tau: Vec3::new(a[1], a[2], a[3]) * tau_max,
    }
}

pub fn normalize_mod1(a: &TransAction, p: &QuadParams) -> [f64; 4] {
    let tau_max = p.moment_max().x;
    [2.0 * a.f / p.thrust_max() - 1.0, a.tau.x / tau_max, a.tau.y / tau_max, a.tau.z / tau_max]
}

pub fn denormalize_mod2(a: f64, p: &QuadParams) -> f64 {
    a * p.moment_max().z
}

/// Result of advancing the environment by one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Wrench after motor saturation.
    pub applied: WrenchAction,
    pub crashed: bool,
    pub truncated: bool,
}

/// A single quadrotor episode. Each instance owns its random stream.
#[derive(Debug, Clone)]
pub struct QuadEnv {
    config: EnvConfig,
    params: QuadParams,
    state: QuadState,
    goal: GoalSpec,
    rng: ChaCha8Rng,
    steps: usize,
}

impl QuadEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Self {
        Self {
            config,
            params: QuadParams::nominal(),
            state: QuadState::hover(),
            goal: GoalSpec::fixed_heading(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps: 0,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn params(&self) -> &QuadParams {
        &self.params
    }

    pub fn state(&self) -> &QuadState {
        &self.state
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn set_goal(&mut self, goal: GoalSpec) {
        self.goal = goal;
    }

    pub fn reset(&mut self) -> &QuadState {
        let (state, params) = reset(&mut self.rng, self.config.randomize, &self.config);
        self.reset_to(state, params);
        &self.state
    }

    pub fn reset_to(&mut self, state: QuadState, params: QuadParams) {
        self.state = state;
        self.params = params;
        self.steps = 0;
    }

    /// Applies a physical wrench (saturated at the motors) for one period.
    pub fn step(&mut self, wrench: &WrenchAction) -> Result<StepInfo, DynamicsError> {
        let applied = saturate(wrench, &self.params);
        self.state = step(&self.state, &applied, &self.params, &self.goal, &self.config.decay, self.config.dt)?;
        self.steps += 1;
        let crashed = crash_check(&self.state, self.config.workspace_bound);
        Ok(StepInfo { applied, crashed, truncated: !crashed && self.steps >= self.config.max_steps })
    }

    /// Steps with a normalised monolithic action.
    pub fn step_mono(&mut self, a: &[f64; 4]) -> Result<StepInfo, DynamicsError> {
        let w = denormalize_action(a, &self.params);
        self.step(&w)
    }

    /// Steps with normalised module actions `(f, tau)` and `M3`.
    pub fn step_modular(&mut self, a1: &[f64], a2: f64) -> Result<StepInfo, DynamicsError> {
        let trans = denormalize_mod1(a1, &self.params);
        let m3 = denormalize_mod2(a2, &self.params);
        let w = assemble_wrench(&self.state, &trans, m3, &self.params);
        self.step(&w)
    }
}

/// One row of an exported trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
    pub r: Mat3,
    pub omega: Vec3,
    pub f: f64,
    pub m: Vec3,
    pub reward: f64,
    pub crash: bool,
}

pub const TRAJECTORY_HEADER: [&str; 25] = [
    "t", "x1", "x2", "x3", "v1", "v2", "v3", "R11", "R21", "R31", "R12", "R22", "R32", "R13", "R23", "R33",
    "Omega1", "Omega2", "Omega3", "f", "M1", "M2", "M3", "r", "crash",
];

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for row in rows {
        let mut rec: Vec<String> = Vec::with_capacity(TRAJECTORY_HEADER.len());
        rec.push(row.t.to_string());
        rec.extend(row.x.iter().map(f64::to_string));
        rec.extend(row.v.iter().map(f64::to_string));
        rec.extend(row.r.as_slice().iter().map(f64::to_string));
        rec.extend(row.omega.iter().map(f64::to_string));
        rec.push(row.f.to_string());
        rec.extend(row.m.iter().map(f64::to_string));
        rec.push(row.reward.to_string());
        rec.push(u8::from(row.crash).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
