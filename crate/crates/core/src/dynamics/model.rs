//! Rigid-body quadrotor model on SO(3), the motor mixer, and the RK4 step.

use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::geometry::{e3, hat, project_to_so3, rho_theta, wrap_angle, Mat3, RotElement, Vec3};

/// States whose magnitude passes this are treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Control and integration period (200 Hz).
pub const DEFAULT_DT: f64 = 0.005;
const HEADING_DEGENERACY: f64 = 1e-6;

/// Physical parameters. `inertia` is the diagonal of `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub mass: f64,
    pub arm_length: f64,
    pub inertia: Vec3,
    pub c_tf: f64,
    pub c_tw: f64,
    pub gravity: f64,
}

impl QuadParams {
    pub fn nominal() -> Self {
        Self {
            mass: 2.15,
            arm_length: 0.23,
            inertia: Vec3::new(0.022, 0.022, 0.035),
            c_tf: 0.0135,
            c_tw: 2.2,
            gravity: 9.81,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            self.mass,
            self.arm_length,
            self.inertia.x,
            self.inertia.y,
            self.inertia.z,
            self.c_tf,
            self.c_tw,
            self.gravity,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err("all quadrotor parameters must be strictly positive".into());
        }
        if self.c_tw <= 1.0 {
            return Err("thrust-to-weight ratio must exceed 1".into());
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Per-motor thrust cap.
    pub fn motor_thrust_max(&self) -> f64 {
        self.c_tw * self.weight() / 4.0
    }

    pub fn thrust_max(&self) -> f64 {
        self.c_tw * self.weight()
    }

    /// Largest body moments reachable from the mixer at the motor limits.
    pub fn moment_max(&self) -> Vec3 {
        let t = self.motor_thrust_max();
        Vec3::new(self.arm_length * t, self.arm_length * t, 2.0 * self.c_tf * t)
    }
}

impl Default for QuadParams {
    fn default() -> Self {
        Self::nominal()
    }
}

/// Decay rates of the leaky position and yaw integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralDecay {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for IntegralDecay {
    fn default() -> Self {
        Self { alpha: 0.1, beta: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadState {
    pub x: Vec3,
    pub v: Vec3,
    pub r: Mat3,
    pub omega: Vec3,
    pub e_ix: Vec3,
    pub e_ib1: f64,
    pub t: f64,
}

impl QuadState {
    pub fn hover() -> Self {
        Self {
            x: Vec3::zeros(),
            v: Vec3::zeros(),
            r: Mat3::identity(),
            omega: Vec3::zeros(),
            e_ix: Vec3::zeros(),
            e_ib1: 0.0,
            t: 0.0,
        }
    }

    pub fn b1(&self) -> Vec3 {
        self.r.column(0).into_owned()
    }

    pub fn b2(&self) -> Vec3 {
        self.r.column(1).into_owned()
    }

    pub fn b3(&self) -> Vec3 {
        self.r.column(2).into_owned()
    }

    fn advanced(&self, d: &StateDerivative, h: f64) -> QuadState {
        QuadState {
            x: self.x + d.x * h,
            v: self.v + d.v * h,
            r: self.r + d.r * h,
            omega: self.omega + d.omega * h,
            e_ix: self.e_ix + d.e_ix * h,
            e_ib1: self.e_ib1 + d.e_ib1 * h,
            t: self.t + h,
        }
    }

    pub fn max_abs_component(&self) -> f64 {
        let mut m = self.x.abs().max();
        for v in [
            self.v.abs().max(),
            self.r.abs().max(),
            self.omega.abs().max(),
            self.e_ix.abs().max(),
            self.e_ib1.abs(),
        ] {
            if !(v <= m) {
                m = v;
            }
        }
        m
    }
}

/// Total thrust `f` (N) and body moment `m` (N m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchAction {
    pub f: f64,
    pub m: Vec3,
}

impl WrenchAction {
    pub fn hover(p: &QuadParams) -> Self {
        Self { f: p.weight(), m: Vec3::zeros() }
    }
}

/// Tracking command. The heading `b1d` spins about `e3` at `yaw_rate` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalSpec {
    pub x_d: Vec3,
    pub v_d: Vec3,
    pub b1d: Vec3,
    pub yaw_rate: f64,
}

impl GoalSpec {
    pub fn fixed_heading() -> Self {
        Self {
            x_d: Vec3::zeros(),
            v_d: Vec3::zeros(),
            b1d: Vec3::new(1.0, 0.0, 0.0),
            yaw_rate: 0.0,
        }
    }

    pub fn with_yaw_rate(yaw_rate: f64) -> Self {
        Self { yaw_rate, ..Self::fixed_heading() }
    }

    pub fn heading_at(&self, t: f64) -> Vec3 {
        if self.yaw_rate == 0.0 {
            self.b1d
        } else {
            rho_theta(&RotElement::new(self.yaw_rate * t)) * self.b1d
        }
    }

    /// Angular velocity of the commanded heading, inertial frame.
    pub fn omega_c(&self) -> Vec3 {
        e3() * self.yaw_rate
    }

    pub fn omega_d(&self, r: &Mat3) -> Vec3 {
        Vec3::new(0.0, 0.0, yaw_command_rate(r, &self.omega_c()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub x: Vec3,
    pub v: Vec3,
    pub r: Mat3,
    pub omega: Vec3,
    pub e_ix: Vec3,
    pub e_ib1: f64,
}

/// `b3 . omega_c`, the commanded yaw rate.
pub fn yaw_command_rate(r: &Mat3, omega_c: &Vec3) -> f64 {
    r.column(2).dot(omega_c)
}

/// Heading command projected onto the plane normal to `b3`.
pub fn projected_heading(r: &Mat3, b1d: &Vec3) -> Result<Vec3, DynamicsError> {
    let b3 = r.column(2);
    let b1c = b1d - b3 * b3.dot(b1d);
    let n = b1c.norm();
    if n < HEADING_DEGENERACY {
        return Err(DynamicsError::DegenerateHeading);
    }
    Ok(b1c / n)
}

/// Signed yaw error between `b1` and the projected command, in `(-pi, pi]`.
pub fn yaw_error(r: &Mat3, b1d: &Vec3) -> Result<f64, DynamicsError> {
    let b1c = projected_heading(r, b1d)?;
    let e = (-b1c.dot(&r.column(1))).atan2(b1c.dot(&r.column(0)));
    Ok(wrap_angle(e))
}

pub fn yaw_error_rate(r: &Mat3, omega: &Vec3, omega_c: &Vec3) -> f64 {
    omega.z - yaw_command_rate(r, omega_c)
}

/// Yaw error used inside the integrator; a degenerate heading contributes nothing.
fn integrable_yaw_error(s: &QuadState, goal: &GoalSpec) -> f64 {
    yaw_error(&s.r, &goal.heading_at(s.t)).unwrap_or(0.0)
}

/// Continuous-time equations of motion plus the leaky error integrators.
pub fn mono_deriv(
    s: &QuadState,
    a: &WrenchAction,
    p: &QuadParams,
    goal: &GoalSpec,
    decay: &IntegralDecay,
) -> StateDerivative {
    let j = p.inertia;
    let jw = j.component_mul(&s.omega);
    let e_x = s.x - goal.x_d;
    StateDerivative {
        x: s.v,
        v: e3() * p.gravity - s.r.column(2) * (a.f / p.mass),
        r: s.r * hat(&s.omega),
        omega: (a.m - s.omega.cross(&jw)).component_div(&j),
        e_ix: -s.e_ix * decay.alpha + e_x,
        e_ib1: -decay.beta * s.e_ib1 + integrable_yaw_error(s, goal),
    }
}

/// One classical RK4 step with the wrench held constant, followed by
/// re-orthonormalisation of the attitude.
pub fn step(
    s: &QuadState,
    a: &WrenchAction,
    p: &QuadParams,
    goal: &GoalSpec,
    decay: &IntegralDecay,
    dt: f64,
) -> Result<QuadState, DynamicsError> {
    let k1 = mono_deriv(s, a, p, goal, decay);
    let k2 = mono_deriv(&s.advanced(&k1, dt / 2.0), a, p, goal, decay);
    let k3 = mono_deriv(&s.advanced(&k2, dt / 2.0), a, p, goal, decay);
    let k4 = mono_deriv(&s.advanced(&k3, dt), a, p, goal, decay);
    let h = dt / 6.0;
    let mut next = QuadState {
        x: s.x + (k1.x + k2.x * 2.0 + k3.x * 2.0 + k4.x) * h,
        v: s.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * h,
        r: s.r + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * h,
        omega: s.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * h,
        e_ix: s.e_ix + (k1.e_ix + k2.e_ix * 2.0 + k3.e_ix * 2.0 + k4.e_ix) * h,
        e_ib1: s.e_ib1 + (k1.e_ib1 + 2.0 * k2.e_ib1 + 2.0 * k3.e_ib1 + k4.e_ib1) * h,
        t: s.t + dt,
    };
    let m = next.max_abs_component();
    if !(m <= DIVERGENCE_LIMIT) {
        return Err(DynamicsError::NumericalDivergence { magnitude: m, t: next.t });
    }
    next.r = project_to_so3(&next.r);
    Ok(next)
}

/// Motor thrusts from total thrust and body moment.
pub fn mix(f: f64, m: &Vec3, p: &QuadParams) -> [f64; 4] {
    let d = p.arm_length;
    let c = p.c_tf;
    [
        0.25 * (f + 2.0 / d * m.y - m.z / c),
        0.25 * (f - 2.0 / d * m.x + m.z / c),
        0.25 * (f - 2.0 / d * m.y - m.z / c),
        0.25 * (f + 2.0 / d * m.x + m.z / c),
    ]
}

/// Inverse of [`mix`].
pub fn unmix(t: &[f64; 4], p: &QuadParams) -> (f64, Vec3) {
    let d = p.arm_length;
    let c = p.c_tf;
    let f = t[0] + t[1] + t[2] + t[3];
    let m = Vec3::new(d * (t[3] - t[1]), d * (t[0] - t[2]), c * (-t[0] + t[1] - t[2] + t[3]));
    (f, m)
}

/// Wrench actually produced once each motor is clamped to `[0, T_max]`.
pub fn saturate(a: &WrenchAction, p: &QuadParams) -> WrenchAction {
    let t_max = p.motor_thrust_max();
    let mut t = mix(a.f, &a.m, p);
    for ti in t.iter_mut() {
        *ti = ti.clamp(0.0, t_max);
    }
    let (f, m) = unmix(&t, p);
    WrenchAction { f, m }
}

/// Converts the virtual torque `tau` (inertial, normal to `b3`) into
/// the first two body moments.
pub fn torque_bridge(tau: &Vec3, r: &Mat3, omega: &Vec3, p: &QuadParams) -> (f64, f64) {
    let j3 = p.inertia.z;
    let tau1 = tau.dot(&r.column(0));
    let tau2 = tau.dot(&r.column(1));
    (tau1 + j3 * omega.y * omega.z, tau2 - j3 * omega.z * omega.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::exp_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rvec(rng: &mut impl Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = QuadParams::nominal();
        let goal = GoalSpec::fixed_heading();
        let s = QuadState::hover();
        let d = mono_deriv(&s, &WrenchAction::hover(&p), &p, &goal, &IntegralDecay::default());
        assert_eq!(d.v.abs().max(), 0.0);
        assert_eq!(d.omega.abs().max(), 0.0);
        assert_eq!(d.r.abs().max(), 0.0);
        let next = step(&s, &WrenchAction::hover(&p), &p, &goal, &IntegralDecay::default(), DEFAULT_DT)
            .unwrap();
        assert!((next.x - s.x).abs().max() < 1e-12);
        assert!((next.r - s.r).abs().max() < 1e-12);
        assert!((next.v - s.v).abs().max() < 1e-12);
    }

    #[test]
    fn free_fall_acceleration() {
        let p = QuadParams::nominal();
        let mut s = QuadState::hover();
        let zero = WrenchAction { f: 0.0, m: Vec3::zeros() };
        let d = mono_deriv(&s, &zero, &p, &GoalSpec::fixed_heading(), &IntegralDecay::default());
        assert_eq!(d.v, Vec3::new(0.0, 0.0, 9.81));
        for _ in 0..200 {
            s = step(&s, &zero, &p, &GoalSpec::fixed_heading(), &IntegralDecay::default(), DEFAULT_DT)
                .unwrap();
        }
        assert!((s.v.norm() - 9.81 * s.t).abs() < 1e-9);
    }

    #[test]
    fn pure_yaw_matches_closed_form() {
        let p = QuadParams::nominal();
        let s = QuadState { omega: Vec3::new(0.0, 0.0, 1.0), ..QuadState::hover() };
        let next = step(&s, &WrenchAction::hover(&p), &p, &GoalSpec::fixed_heading(), &IntegralDecay::default(), 0.005)
            .unwrap();
        assert!((next.r - exp_so3(&Vec3::new(0.0, 0.0, 0.005))).abs().max() < 1e-9);
    }

    #[test]
    fn mixer_values() {
        let p = QuadParams::nominal();
        let t = mix(p.weight(), &Vec3::zeros(), &p);
        for ti in t {
            assert!((ti - 5.2729).abs() < 1e-4);
        }
        let t = mix(4.0, &Vec3::new(0.0, 0.0, p.c_tf), &p);
        let expected = [0.75, 1.25, 0.75, 1.25];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mixer_round_trip() {
        let p = QuadParams::nominal();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let f = rng.random_range(0.0..40.0);
            let m = rvec(&mut rng, 2.0);
            let (f2, m2) = unmix(&mix(f, &m, &p), &p);
            assert!((f - f2).abs() < 1e-12);
            assert!((m - m2).abs().max() < 1e-12);
        }
    }

    #[test]
    fn saturation_respects_motor_limits() {
        let p = QuadParams::nominal();
        let a = WrenchAction { f: 60.0, m: Vec3::new(3.0, -3.0, 1.0) };
        let sat = saturate(&a, &p);
        for ti in mix(sat.f, &sat.m, &p) {
            assert!(ti >= -1e-12 && ti <= p.motor_thrust_max() + 1e-12);
        }
        let hover = WrenchAction::hover(&p);
        assert!((saturate(&hover, &p).f - hover.f).abs() < 1e-12);
    }

    #[test]
    fn moment_limits_come_from_mixer() {
        let p = QuadParams::nominal();
        let t = p.motor_thrust_max();
        let (_, m) = unmix(&[0.0, 0.0, 0.0, t], &p);
        assert!((m.x - p.moment_max().x).abs() < 1e-12);
        let (_, m) = unmix(&[0.0, t, 0.0, t], &p);
        assert!((m.z - p.moment_max().z).abs() < 1e-12);
    }

    #[test]
    fn torque_bridge_examples() {
        let p = QuadParams::nominal();
        let tau = Vec3::new(0.3, -0.2, 0.0);
        let (m1, m2) = torque_bridge(&tau, &Mat3::identity(), &Vec3::zeros(), &p);
        assert_eq!((m1, m2), (0.3, -0.2));
        let (m1, m2) = torque_bridge(&Vec3::zeros(), &Mat3::identity(), &Vec3::new(1.0, 2.0, 3.0), &p);
        assert!((m1 - 0.21).abs() < 1e-15);
        assert!((m2 + 0.105).abs() < 1e-15);
    }

    #[test]
    fn yaw_error_examples() {
        let r = Mat3::identity();
        assert_eq!(yaw_error(&r, &Vec3::new(1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert!((yaw_error(&r, &Vec3::new(0.0, 1.0, 0.0)).unwrap() + PI / 2.0).abs() < 1e-15);
        let omega = Vec3::new(0.0, 0.0, 0.5);
        let rate = yaw_error_rate(&r, &omega, &Vec3::new(0.0, 0.0, 0.2));
        assert!((rate - 0.3).abs() < 1e-15);
        assert!(matches!(
            yaw_error(&r, &Vec3::new(0.0, 0.0, 1.0)),
            Err(DynamicsError::DegenerateHeading)
        ));
    }

    #[test]
    fn yaw_error_aligned_for_random_attitudes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let r = exp_so3(&rvec(&mut rng, 1.0));
            let e = yaw_error(&r, &r.column(0).into_owned()).unwrap();
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = QuadParams::nominal();
        let s = QuadState { v: Vec3::new(2e6, 0.0, 0.0), ..QuadState::hover() };
        let err = step(&s, &WrenchAction::hover(&p), &p, &GoalSpec::fixed_heading(), &IntegralDecay::default(), 0.005);
        assert!(matches!(err, Err(DynamicsError::NumericalDivergence { .. })));
    }
}
