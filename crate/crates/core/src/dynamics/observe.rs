//! Error-coordinate observations and the shaped rewards built on them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::model::{yaw_error, GoalSpec, QuadState};
use super::modular::{TransState, YawState};
use crate::geometry::{Mat3, Vec3};

pub const MONO_OBS_DIM: usize = 23;
pub const MOD1_OBS_DIM: usize = 15;
pub const MOD2_OBS_DIM: usize = 3;

/// Monolithic observation. `r` is flattened column by column so that each
/// column rotates as a vector under the vertical-axis group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonoObs {
    pub e_x: Vec3,
    pub e_ix: Vec3,
    pub e_v: Vec3,
    pub r: Mat3,
    pub e_b1: f64,
    pub e_ib1: f64,
    pub e_omega: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransObs {
    pub e_x: Vec3,
    pub e_ix: Vec3,
    pub e_v: Vec3,
    pub b3: Vec3,
    pub e_w12: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawObs {
    pub e_b1: f64,
    pub e_ib1: f64,
    pub e_b1_dot: f64,
}

fn current_yaw_error(s: &QuadState, goal: &GoalSpec) -> f64 {
    yaw_error(&s.r, &goal.heading_at(s.t)).unwrap_or(0.0)
}

pub fn observe_mono(s: &QuadState, goal: &GoalSpec) -> MonoObs {
    MonoObs {
        e_x: s.x - goal.x_d,
        e_ix: s.e_ix,
        e_v: s.v - goal.v_d,
        r: s.r,
        e_b1: current_yaw_error(s, goal),
        e_ib1: s.e_ib1,
        e_omega: s.omega - goal.omega_d(&s.r),
    }
}

pub fn observe_mod1(s: &QuadState, goal: &GoalSpec) -> TransObs {
    let t = TransState::from_quad(s);
    TransObs { e_x: t.x - goal.x_d, e_ix: t.e_ix, e_v: t.v - goal.v_d, b3: t.b3, e_w12: t.w12 }
}

pub fn observe_mod2(s: &QuadState, goal: &GoalSpec) -> YawObs {
    let y = YawState::from_quad(s, goal).unwrap_or(YawState {
        e_b1: 0.0,
        e_ib1: s.e_ib1,
        e_b1_dot: s.omega.z - s.r.column(2).dot(&goal.omega_c()),
    });
    YawObs { e_b1: y.e_b1, e_ib1: y.e_ib1, e_b1_dot: y.e_b1_dot }
}

/// Divisors that bring each observation block to roughly `[-1, 1]`. One
/// scalar per vector block, so scaling commutes with rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsScale {
    pub position: f64,
    pub position_integral: f64,
    pub velocity: f64,
    pub angular_velocity: f64,
    pub yaw: f64,
    pub yaw_integral: f64,
}

impl Default for ObsScale {
    fn default() -> Self {
        Self {
            position: 3.0,
            position_integral: 3.0,
            velocity: 5.0,
            angular_velocity: 10.0,
            yaw: PI,
            yaw_integral: PI,
        }
    }
}

fn push3(out: &mut Vec<f64>, v: &Vec3, scale: f64) {
    out.extend_from_slice(&[v.x / scale, v.y / scale, v.z / scale]);
}

impl MonoObs {
    /// Flattened, unscaled.
    pub fn to_vec(&self) -> Vec<f64> {
        self.to_scaled_vec(&ObsScale {
            position: 1.0,
            position_integral: 1.0,
            velocity: 1.0,
            angular_velocity: 1.0,
            yaw: 1.0,
            yaw_integral: 1.0,
        })
    }

    pub fn to_scaled_vec(&self, k: &ObsScale) -> Vec<f64> {
        let mut out = Vec::with_capacity(MONO_OBS_DIM);
        push3(&mut out, &self.e_x, k.position);
        push3(&mut out, &self.e_ix, k.position_integral);
        push3(&mut out, &self.e_v, k.velocity);
        out.extend(self.r.as_slice().iter());
        out.push(self.e_b1 / k.yaw);
        out.push(self.e_ib1 / k.yaw_integral);
        push3(&mut out, &self.e_omega, k.angular_velocity);
        out
    }
}

impl TransObs {
    pub fn to_scaled_vec(&self, k: &ObsScale) -> Vec<f64> {
        let mut out = Vec::with_capacity(MOD1_OBS_DIM);
        push3(&mut out, &self.e_x, k.position);
        push3(&mut out, &self.e_ix, k.position_integral);
        push3(&mut out, &self.e_v, k.velocity);
        push3(&mut out, &self.b3, 1.0);
        push3(&mut out, &self.e_w12, k.angular_velocity);
        out
    }
}

impl YawObs {
    pub fn to_scaled_vec(&self, k: &ObsScale) -> Vec<f64> {
        vec![self.e_b1 / k.yaw, self.e_ib1 / k.yaw_integral, self.e_b1_dot / k.angular_velocity]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub k_x: f64,
    pub k_ix: f64,
    pub k_b1: f64,
    pub k_ib1: f64,
    pub k_v: f64,
    pub k_omega: f64,
    pub k_w12: f64,
    pub k_omega3: f64,
    pub r_crash: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            k_x: 6.0,
            k_ix: 0.1,
            k_b1: 6.0,
            k_ib1: 0.1,
            k_v: 0.4,
            k_omega: 0.6,
            k_w12: 0.6,
            k_omega3: 0.1,
            r_crash: 10.0,
        }
    }
}

fn crash_penalty(w: &RewardWeights, crashed: bool) -> f64 {
    if crashed {
        w.r_crash
    } else {
        0.0
    }
}

/// Raw (unnormalised) monolithic reward.
pub fn reward_mono(o: &MonoObs, w: &RewardWeights, crashed: bool) -> f64 {
    -w.k_x * o.e_x.norm_squared()
        - w.k_ix * o.e_ix.norm_squared()
        - w.k_b1 * o.e_b1.abs()
        - w.k_ib1 * o.e_ib1 * o.e_ib1
        - w.k_v * o.e_v.norm_squared()
        - w.k_omega * o.e_omega.norm_squared()
        - crash_penalty(w, crashed)
}

pub fn reward_mod1(o: &TransObs, w: &RewardWeights, crashed: bool) -> f64 {
    -w.k_x * o.e_x.norm_squared()
        - w.k_ix * o.e_ix.norm_squared()
        - w.k_v * o.e_v.norm_squared()
        - w.k_w12 * o.e_w12.norm_squared()
        - crash_penalty(w, crashed)
}

pub fn reward_mod2(o: &YawObs, w: &RewardWeights, crashed: bool) -> f64 {
    -w.k_b1 * o.e_b1.abs()
        - w.k_ib1 * o.e_ib1 * o.e_ib1
        - w.k_omega3 * o.e_b1_dot * o.e_b1_dot
        - crash_penalty(w, crashed)
}

/// Evaluation score: position distance plus absolute heading error.
pub fn reward_eval(e_x: &Vec3, e_b1: f64) -> f64 {
    -e_x.norm() - e_b1.abs()
}

/// Raw penalty magnitudes mapped to zero reward after normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardScales {
    pub mono: f64,
    pub mod1: f64,
    pub mod2: f64,
    pub eval: f64,
}

impl RewardScales {
    /// Penalty at a position error equal to the workspace bound (and, for
    /// yaw-bearing rewards, the largest heading error).
    pub fn new(w: &RewardWeights, bound: f64) -> Self {
        Self {
            mono: w.k_x * bound * bound + w.k_b1 * PI,
            mod1: w.k_x * bound * bound,
            mod2: w.k_b1 * PI,
            eval: bound + PI,
        }
    }
}

pub fn normalize_reward(raw: f64, scale: f64) -> f64 {
    (1.0 + raw / scale).clamp(0.0, 1.0)
}
