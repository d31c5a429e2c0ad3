//! Decoupled translational (thrust direction) and yaw-error dynamics.
//!
//! Valid when the vehicle is inertially symmetric about `b3` (`J1 == J2`).

use super::model::{
    projected_heading, torque_bridge, yaw_error, yaw_error_rate, GoalSpec, IntegralDecay,
    QuadParams, QuadState, WrenchAction,
};
use super::DynamicsError;
use crate::geometry::{e3, wrap_angle, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransState {
    pub x: Vec3,
    pub v: Vec3,
    pub b3: Vec3,
    /// Angular velocity of `b3`, inertial frame, normal to `b3`.
    pub w12: Vec3,
    pub e_ix: Vec3,
}

impl TransState {
    pub fn from_quad(s: &QuadState) -> Self {
        let w12 = s.r * Vec3::new(s.omega.x, s.omega.y, 0.0);
        Self { x: s.x, v: s.v, b3: s.b3(), w12, e_ix: s.e_ix }
    }

    fn advanced(&self, d: &TransDerivative, h: f64) -> Self {
        Self {
            x: self.x + d.x * h,
            v: self.v + d.v * h,
            b3: self.b3 + d.b3 * h,
            w12: self.w12 + d.w12 * h,
            e_ix: self.e_ix + d.e_ix * h,
        }
    }
}

/// Total thrust and virtual torque (inertial frame, normal to `b3`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransAction {
    pub f: f64,
    pub tau: Vec3,
}

impl TransAction {
    /// Removes the component of `tau` along `b3`.
    pub fn projected(&self, b3: &Vec3) -> Self {
        Self { f: self.f, tau: self.tau - b3 * b3.dot(&self.tau) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransDerivative {
    pub x: Vec3,
    pub v: Vec3,
    pub b3: Vec3,
    pub w12: Vec3,
    pub e_ix: Vec3,
}

pub fn trans_deriv(
    s: &TransState,
    a: &TransAction,
    p: &QuadParams,
    goal: &GoalSpec,
    decay: &IntegralDecay,
) -> TransDerivative {
    TransDerivative {
        x: s.v,
        v: e3() * p.gravity - s.b3 * (a.f / p.mass),
        b3: s.w12.cross(&s.b3),
        w12: a.tau / p.inertia.x,
        e_ix: -s.e_ix * decay.alpha + (s.x - goal.x_d),
    }
}

/// RK4 step of the translational module. `b3` is renormalised and `w12`
/// re-projected onto the tangent plane afterwards.
pub fn trans_step(
    s: &TransState,
    a: &TransAction,
    p: &QuadParams,
    goal: &GoalSpec,
    decay: &IntegralDecay,
    dt: f64,
) -> TransState {
    let a = a.projected(&s.b3);
    let k1 = trans_deriv(s, &a, p, goal, decay);
    let k2 = trans_deriv(&s.advanced(&k1, dt / 2.0), &a, p, goal, decay);
    let k3 = trans_deriv(&s.advanced(&k2, dt / 2.0), &a, p, goal, decay);
    let k4 = trans_deriv(&s.advanced(&k3, dt), &a, p, goal, decay);
    let h = dt / 6.0;
    let comb = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + b * 2.0 + c * 2.0 + d) * h;
    let b3 = (s.b3 + comb(k1.b3, k2.b3, k3.b3, k4.b3)).normalize();
    let w12 = s.w12 + comb(k1.w12, k2.w12, k3.w12, k4.w12);
    TransState {
        x: s.x + comb(k1.x, k2.x, k3.x, k4.x),
        v: s.v + comb(k1.v, k2.v, k3.v, k4.v),
        b3,
        w12: w12 - b3 * b3.dot(&w12),
        e_ix: s.e_ix + comb(k1.e_ix, k2.e_ix, k3.e_ix, k4.e_ix),
    }
}

/// Yaw-error state `(e_b1, e_Ib1, de_b1/dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawState {
    pub e_b1: f64,
    pub e_ib1: f64,
    pub e_b1_dot: f64,
}

impl YawState {
    pub fn from_quad(s: &QuadState, goal: &GoalSpec) -> Result<Self, DynamicsError> {
        Ok(Self {
            e_b1: yaw_error(&s.r, &goal.heading_at(s.t))?,
            e_ib1: s.e_ib1,
            e_b1_dot: yaw_error_rate(&s.r, &s.omega, &goal.omega_c()),
        })
    }

    pub fn neg(&self) -> Self {
        Self { e_b1: -self.e_b1, e_ib1: -self.e_ib1, e_b1_dot: -self.e_b1_dot }
    }

    fn advanced(&self, d: &YawDerivative, h: f64) -> Self {
        Self {
            e_b1: self.e_b1 + d.e_b1 * h,
            e_ib1: self.e_ib1 + d.e_ib1 * h,
            e_b1_dot: self.e_b1_dot + d.e_b1_dot * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YawDerivative {
    pub e_b1: f64,
    pub e_ib1: f64,
    pub e_b1_dot: f64,
}

/// Yaw-error dynamics; `wc3_dot` is the rate of change of the commanded yaw rate.
pub fn yaw_deriv(s: &YawState, m3: f64, wc3_dot: f64, p: &QuadParams, decay: &IntegralDecay) -> YawDerivative {
    YawDerivative {
        e_b1: s.e_b1_dot,
        e_ib1: -decay.beta * s.e_ib1 + s.e_b1,
        e_b1_dot: m3 / p.inertia.z - wc3_dot,
    }
}

/// RK4 step of the yaw-error module; the error angle is wrapped afterwards.
pub fn yaw_step(s: &YawState, m3: f64, wc3_dot: f64, p: &QuadParams, decay: &IntegralDecay, dt: f64) -> YawState {
    let k1 = yaw_deriv(s, m3, wc3_dot, p, decay);
    let k2 = yaw_deriv(&s.advanced(&k1, dt / 2.0), m3, wc3_dot, p, decay);
    let k3 = yaw_deriv(&s.advanced(&k2, dt / 2.0), m3, wc3_dot, p, decay);
    let k4 = yaw_deriv(&s.advanced(&k3, dt), m3, wc3_dot, p, decay);
    let h = dt / 6.0;
    YawState {
        e_b1: wrap_angle(s.e_b1 + (k1.e_b1 + 2.0 * k2.e_b1 + 2.0 * k3.e_b1 + k4.e_b1) * h),
        e_ib1: s.e_ib1 + (k1.e_ib1 + 2.0 * k2.e_ib1 + 2.0 * k3.e_ib1 + k4.e_ib1) * h,
        e_b1_dot: s.e_b1_dot + (k1.e_b1_dot + 2.0 * k2.e_b1_dot + 2.0 * k3.e_b1_dot + k4.e_b1_dot) * h,
    }
}

/// Assembles the monolithic wrench from the two module outputs.
pub fn assemble_wrench(s: &QuadState, a1: &TransAction, m3: f64, p: &QuadParams) -> WrenchAction {
    let a1 = a1.projected(&s.b3());
    let (m1, m2) = torque_bridge(&a1.tau, &s.r, &s.omega, p);
    WrenchAction { f: a1.f, m: Vec3::new(m1, m2, m3) }
}

/// Projected heading command for the current attitude; convenience wrapper.
pub fn heading_command(s: &QuadState, goal: &GoalSpec) -> Result<Vec3, DynamicsError> {
    projected_heading(&s.r, &goal.heading_at(s.t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::model::mono_deriv;
    use crate::geometry::{act_mod1, act_mod2, exp_so3, RefElement, RotElement};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut impl Rng, s: f64) -> Vec3 {
        Vec3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
    }

    fn random_quad(rng: &mut impl Rng) -> QuadState {
        QuadState {
            x: rvec(rng, 1.0),
            v: rvec(rng, 1.0),
            r: exp_so3(&rvec(rng, 1.5)),
            omega: rvec(rng, 2.0),
            e_ix: rvec(rng, 0.5),
            e_ib1: rng.random_range(-0.5..0.5),
            t: 0.0,
        }
    }

    #[test]
    fn hover_derivatives() {
        let p = QuadParams::nominal();
        let s = TransState::from_quad(&QuadState { v: Vec3::new(0.1, 0.2, 0.3), ..QuadState::hover() });
        let a = TransAction { f: p.weight(), tau: Vec3::zeros() };
        let d = trans_deriv(&s, &a, &p, &GoalSpec::fixed_heading(), &IntegralDecay::default());
        assert_eq!(d.x, s.v);
        assert!(d.v.abs().max() < 1e-15);
        assert_eq!(d.b3, Vec3::zeros());
        assert_eq!(d.w12, Vec3::zeros());
    }

    #[test]
    fn unit_torque_response() {
        let p = QuadParams::nominal();
        let s = TransState::from_quad(&QuadState::hover());
        let a = TransAction { f: p.weight(), tau: Vec3::new(0.022, 0.0, 0.0) };
        let d = trans_deriv(&s, &a, &p, &GoalSpec::fixed_heading(), &IntegralDecay::default());
        assert!((d.w12 - Vec3::new(1.0, 0.0, 0.0)).abs().max() < 1e-15);
    }

    #[test]
    fn trans_constraints_and_equivariance() {
        let p = QuadParams::nominal();
        let goal = GoalSpec::fixed_heading();
        let decay = IntegralDecay::default();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..100 {
            let q = random_quad(&mut rng);
            let s = TransState::from_quad(&q);
            let a = TransAction { f: rng.random_range(0.0..40.0), tau: rvec(&mut rng, 0.5) }.projected(&s.b3);
            let d = trans_deriv(&s, &a, &p, &goal, &decay);
            assert!(d.b3.dot(&s.b3).abs() < 1e-12);
            assert!(d.w12.dot(&s.b3).abs() < 1e-12);
            let g = RotElement::new(rng.random_range(-3.0..3.0));
            let (gs, ga) = act_mod1(&g, &s, &a);
            assert!((ga.tau.dot(&gs.b3) - a.tau.dot(&s.b3)).abs() < 1e-14);
            let lhs = trans_deriv(&gs, &ga, &p, &goal, &decay);
            let rot = g.matrix();
            for (l, r) in [(lhs.x, d.x), (lhs.v, d.v), (lhs.b3, d.b3), (lhs.w12, d.w12), (lhs.e_ix, d.e_ix)] {
                assert!((l - rot * r).abs().max() < 1e-12);
            }
        }
    }

    #[test]
    fn modular_assembly_reproduces_monolithic_rates() {
        let p = QuadParams::nominal();
        let goal = GoalSpec::fixed_heading();
        let decay = IntegralDecay::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let q = random_quad(&mut rng);
            let s = TransState::from_quad(&q);
            let a1 = TransAction { f: rng.random_range(0.0..40.0), tau: rvec(&mut rng, 0.5) }.projected(&s.b3);
            let m3 = rng.random_range(-0.3..0.3);
            let wrench = assemble_wrench(&q, &a1, m3, &p);
            let mono = mono_deriv(&q, &wrench, &p, &goal, &decay);
            let modular = trans_deriv(&s, &a1, &p, &goal, &decay);
            // d/dt (R [W1, W2, 0]) from the monolithic derivative
            let w12_dot = mono.r * Vec3::new(q.omega.x, q.omega.y, 0.0)
                + q.r * Vec3::new(mono.omega.x, mono.omega.y, 0.0);
            assert!((w12_dot - modular.w12).abs().max() < 1e-10);
            assert!((mono.r.column(2) - modular.b3).abs().max() < 1e-10);
            assert!((mono.v - modular.v).abs().max() < 1e-10);
            assert!((mono.omega.z * p.inertia.z - m3).abs() < 1e-10);
        }
    }

    #[test]
    fn yaw_reflection() {
        let p = QuadParams::nominal();
        let decay = IntegralDecay::default();
        let s = YawState { e_b1: 0.0, e_ib1: 0.0, e_b1_dot: 0.0 };
        assert_eq!(yaw_deriv(&s, 0.0, 0.0, &p, &decay).e_b1_dot, 0.0);
        let d = yaw_deriv(&s, 0.035, 0.0, &p, &decay);
        assert!((d.e_b1_dot - 1.0).abs() < 1e-15);

        let (fs, fm) = act_mod2(&RefElement::Flip, &YawState { e_b1: 0.3, e_ib1: 0.1, e_b1_dot: -0.2 }, 0.05);
        assert_eq!((fs.e_b1, fs.e_ib1, fs.e_b1_dot, fm), (-0.3, -0.1, 0.2, -0.05));
        let (back, m) = act_mod2(&RefElement::Flip, &fs, fm);
        assert_eq!((back.e_b1, back.e_ib1, back.e_b1_dot, m), (0.3, 0.1, -0.2, 0.05));

        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let s = YawState {
                e_b1: rng.random_range(-3.0..3.0),
                e_ib1: rng.random_range(-2.0..2.0),
                e_b1_dot: rng.random_range(-4.0..4.0),
            };
            let m3 = rng.random_range(-0.3..0.3);
            let a = yaw_deriv(&s, m3, 0.0, &p, &decay);
            let b = yaw_deriv(&s.neg(), -m3, 0.0, &p, &decay);
            assert_eq!((a.e_b1, a.e_ib1, a.e_b1_dot), (-b.e_b1, -b.e_ib1, -b.e_b1_dot));
        }
    }

    #[test]
    fn yaw_state_tracks_full_model() {
        let p = QuadParams::nominal();
        let goal = GoalSpec::with_yaw_rate(0.35);
        let decay = IntegralDecay::default();
        let mut q = QuadState { omega: Vec3::new(0.0, 0.0, 0.2), ..QuadState::hover() };
        let mut y = YawState::from_quad(&q, &goal).unwrap();
        let a = WrenchAction { f: p.weight(), m: Vec3::new(0.0, 0.0, 0.01) };
        for _ in 0..200 {
            q = crate::dynamics::model::step(&q, &a, &p, &goal, &decay, 0.005).unwrap();
            y = yaw_step(&y, a.m.z, 0.0, &p, &decay, 0.005);
        }
        let from_full = YawState::from_quad(&q, &goal).unwrap();
        assert!((from_full.e_b1 - y.e_b1).abs() < 1e-6);
        assert!((from_full.e_b1_dot - y.e_b1_dot).abs() < 1e-9);
        assert!((from_full.e_ib1 - y.e_ib1).abs() < 1e-6);
    }
}
