use equivquad_core::dynamics::{mix, step, unmix, GoalSpec, IntegralDecay, QuadParams, QuadState, WrenchAction};
use equivquad_core::geometry::{act_mono_state, exp_so3, hat, project_to_so3, vee, wrap_angle, Mat3, RotElement, Vec3};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

proptest! {
    #[test]
    fn hat_vee_round_trip(v in vec3(10.0), w in vec3(10.0)) {
        prop_assert!((vee(&hat(&v)).unwrap() - v).amax() < 1e-15);
        prop_assert!((hat(&v) * w - v.cross(&w)).amax() < 1e-12);
    }

    #[test]
    fn exponential_is_a_rotation(v in vec3(6.0)) {
        let r = exp_so3(&v);
        prop_assert!((r.transpose() * r - Mat3::identity()).amax() < 1e-13);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-13);
        prop_assert!((r * v - v).amax() < 1e-12);
    }

    #[test]
    fn projection_fixes_rotations(v in vec3(3.0), e in vec3(1e-3)) {
        let r = exp_so3(&v);
        prop_assert!((project_to_so3(&r) - r).amax() < 1e-14);
        let p = project_to_so3(&(r + hat(&e) * 0.5 + Mat3::from_diagonal(&e)));
        prop_assert!((p.transpose() * p - Mat3::identity()).amax() < 1e-13);
    }

    #[test]
    fn wrapped_angles_stay_in_range(t in -100.0f64..100.0) {
        let w = wrap_angle(t);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        prop_assert!(((t - w) / (2.0 * std::f64::consts::PI)).fract().abs().min(1.0 - ((t - w) / (2.0 * std::f64::consts::PI)).fract().abs()) < 1e-9);
    }

    #[test]
    fn mixer_round_trip(f in 0.0f64..60.0, m in vec3(2.0)) {
        let p = QuadParams::nominal();
        let (f2, m2) = unmix(&mix(f, &m, &p), &p);
        prop_assert!((f2 - f).abs() < 1e-12);
        prop_assert!((m2 - m).amax() < 1e-12);
    }

    #[test]
    fn one_step_commutes_with_vertical_rotation(
        x in vec3(1.0), v in vec3(1.0), att in vec3(0.5), w in vec3(1.0),
        theta in -3.2f64..3.2, df in -0.1f64..0.1, m in vec3(0.05),
    ) {
        let p = QuadParams::nominal();
        let s = QuadState { x, v, r: exp_so3(&att), omega: w, ..QuadState::hover() };
        let g = RotElement::new(theta);
        let goal = GoalSpec::fixed_heading();
        let gg = equivquad_core::geometry::act_goal(&g, &goal);
        let a = WrenchAction { f: p.weight() * (1.0 + df), m };
        let d = IntegralDecay::default();
        let lhs = act_mono_state(&g, &step(&s, &a, &p, &goal, &d, 0.005).unwrap());
        let rhs = step(&act_mono_state(&g, &s), &a, &p, &gg, &d, 0.005).unwrap();
        prop_assert!((lhs.x - rhs.x).amax() < 1e-13);
        prop_assert!((lhs.v - rhs.v).amax() < 1e-13);
        prop_assert!((lhs.r - rhs.r).amax() < 1e-13);
        prop_assert!((lhs.omega - rhs.omega).amax() < 1e-13);
        prop_assert!((lhs.e_ib1 - rhs.e_ib1).abs() < 1e-13);
    }
}
