//! SO(3) primitives and the symmetry groups acting on the quadrotor.
//!
//! Two groups appear: rotations about the inertial vertical axis `e3`
//! (an SO(2) embedded in SO(3)) and the sign-flip group `{+1, -1}` acting on
//! the yaw-error channels. Matrices act by left multiplication.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::dynamics::{GoalSpec, QuadState, TransAction, TransState, WrenchAction, YawState};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this rotation angle `exp_so3` uses a Taylor expansion.
const EXP_SERIES_THRESHOLD: f64 = 1e-6;
const SKEW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is not skew-symmetric (|S + S^T| = {0:e})")]
    NonSkewInput(f64),
}

pub fn e3() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// Skew-symmetric matrix with `hat(v) * w == v.cross(w)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`].
pub fn vee(s: &Mat3) -> Result<Vec3, GeometryError> {
    let asym = (s + s.transpose()).abs().max();
    if asym > SKEW_TOLERANCE {
        return Err(GeometryError::NonSkewInput(asym));
    }
    Ok(Vec3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    ))
}

/// Rodrigues formula `exp(hat(v))`.
pub fn exp_so3(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < EXP_SERIES_THRESHOLD {
        // sin(t)/t and (1 - cos t)/t^2 to fourth order
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = hat(v);
    Mat3::identity() + k * a + k * k * b
}

/// Closest rotation to `m` in the Frobenius sense (orthogonal polar factor).
pub fn project_to_so3(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Element of the rotation group about `e3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotElement {
    theta: f64,
}

impl RotElement {
    pub fn new(theta: f64) -> Self {
        Self { theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self { theta: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn compose(&self, other: &RotElement) -> RotElement {
        RotElement::new(self.theta + other.theta)
    }

    pub fn inverse(&self) -> RotElement {
        RotElement::new(-self.theta)
    }

    pub fn matrix(&self) -> Mat3 {
        rho_theta(self)
    }
}

/// Element of the reflection group `{+1, -1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefElement {
    Identity,
    Flip,
}

impl RefElement {
    pub fn sign(&self) -> f64 {
        match self {
            RefElement::Identity => 1.0,
            RefElement::Flip => -1.0,
        }
    }

    pub fn compose(&self, other: &RefElement) -> RefElement {
        if self == other {
            RefElement::Identity
        } else {
            RefElement::Flip
        }
    }
}

/// Rotation matrix about `e3` by the element's angle.
pub fn rho_theta(g: &RotElement) -> Mat3 {
    let (s, c) = g.theta.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotates the whole vehicle about the vertical axis. Body-frame quantities
/// (`omega`, thrust and moment) are left alone; the yaw integral is invariant.
pub fn act_mono(g: &RotElement, s: &QuadState, a: &WrenchAction) -> (QuadState, WrenchAction) {
    (act_mono_state(g, s), *a)
}

pub fn act_mono_state(g: &RotElement, s: &QuadState) -> QuadState {
    let q = rho_theta(g);
    QuadState {
        x: q * s.x,
        v: q * s.v,
        r: q * s.r,
        omega: s.omega,
        e_ix: q * s.e_ix,
        e_ib1: s.e_ib1,
        t: s.t,
    }
}

/// The heading command is an inertial direction, so it rotates with the state.
pub fn act_goal(g: &RotElement, goal: &GoalSpec) -> GoalSpec {
    let q = rho_theta(g);
    GoalSpec {
        x_d: q * goal.x_d,
        v_d: q * goal.v_d,
        b1d: q * goal.b1d,
        yaw_rate: goal.yaw_rate,
    }
}

pub fn act_mod1(g: &RotElement, s: &TransState, a: &TransAction) -> (TransState, TransAction) {
    let q = rho_theta(g);
    (
        TransState {
            x: q * s.x,
            v: q * s.v,
            b3: q * s.b3,
            w12: q * s.w12,
            e_ix: q * s.e_ix,
        },
        TransAction {
            f: a.f,
            tau: q * a.tau,
        },
    )
}

pub fn act_mod2(g: &RefElement, s: &YawState, m3: f64) -> (YawState, f64) {
    let k = g.sign();
    (
        YawState {
            e_b1: k * s.e_b1,
            e_ib1: k * s.e_ib1,
            e_b1_dot: k * s.e_b1_dot,
        },
        k * m3,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &Mat3) -> f64 {
        m.abs().max()
    }

    fn random_vec(rng: &mut impl Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn hat_basis_and_zero() {
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(hat(&e3()), expected);
    }

    #[test]
    fn hat_matches_cross_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v = random_vec(&mut rng, 2.0);
            let w = random_vec(&mut rng, 2.0);
            // componentwise cross product
            let cross = Vec3::new(
                v.y * w.z - v.z * w.y,
                v.z * w.x - v.x * w.z,
                v.x * w.y - v.y * w.x,
            );
            assert!((hat(&v) * w - cross).abs().max() <= 1e-15);
            let s = hat(&v);
            assert_eq!(s.transpose(), -s);
        }
    }

    #[test]
    fn vee_round_trip_and_rejects_non_skew() {
        assert_eq!(vee(&hat(&Vec3::new(1.0, 2.0, 3.0))).unwrap(), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s = hat(&random_vec(&mut rng, 3.0));
            assert!(max_abs(&(hat(&vee(&s).unwrap()) - s)) <= 1e-15);
        }
        assert!(matches!(vee(&Mat3::identity()), Err(GeometryError::NonSkewInput(_))));
    }

    #[test]
    fn exp_so3_cases() {
        assert_eq!(exp_so3(&Vec3::zeros()), Mat3::identity());
        let quarter = exp_so3(&Vec3::new(0.0, 0.0, PI / 2.0));
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(max_abs(&(quarter - expected)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let r = exp_so3(&random_vec(&mut rng, 4.0));
            assert!(max_abs(&(r.transpose() * r - Mat3::identity())) < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
        // series branch stays continuous with the closed form
        let tiny = Vec3::new(3e-7, -2e-7, 5e-7);
        let near = Vec3::new(3e-6, -2e-6, 5e-6);
        assert!(max_abs(&(exp_so3(&tiny) - (Mat3::identity() + hat(&tiny)))) < 1e-12);
        assert!(max_abs(&(exp_so3(&near) - (Mat3::identity() + hat(&near)))) < 1e-10);
    }

    #[test]
    fn exp_agrees_with_rho_theta_on_vertical_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let theta = rng.random_range(-PI..PI);
            let g = RotElement::new(theta);
            assert!(max_abs(&(exp_so3(&(e3() * theta)) - rho_theta(&g))) < 1e-12);
        }
    }

    #[test]
    fn rho_theta_homomorphism() {
        assert_eq!(rho_theta(&RotElement::identity()), Mat3::identity());
        let a = RotElement::new(PI / 3.0);
        let b = RotElement::new(PI / 4.0);
        let ab = rho_theta(&a) * rho_theta(&b);
        assert!(max_abs(&(ab - rho_theta(&RotElement::new(7.0 * PI / 12.0)))) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let g = RotElement::new(rng.random_range(-10.0..10.0));
            let q = rho_theta(&g);
            assert!(max_abs(&(q.transpose() * q - Mat3::identity())) < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-12);
            assert!((q * e3() - e3()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let t = wrap_angle(rng.random_range(-50.0..50.0));
            assert!(t > -PI && t <= PI);
        }
        let g = RotElement::new(3.0).compose(&RotElement::new(3.0));
        assert!(g.theta() > -PI && g.theta() <= PI);
    }

    #[test]
    fn reflection_group_closure() {
        use RefElement::*;
        assert_eq!(Flip.compose(&Flip), Identity);
        assert_eq!(Flip.compose(&Identity), Flip);
        assert_eq!(Flip.sign() * Flip.sign(), 1.0);
    }

    #[test]
    fn project_to_so3_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let r = exp_so3(&random_vec(&mut rng, 3.0));
            let noisy = r + Mat3::from_fn(|_, _| rng.random_range(-1e-4..1e-4));
            let p = project_to_so3(&noisy);
            assert!(max_abs(&(p.transpose() * p - Mat3::identity())) < 1e-12);
            assert!(max_abs(&(p - r)) < 1e-3);
        }
    }
}
