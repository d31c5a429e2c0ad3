//! Symmetry property suite behind `check-symmetry`.

use equivquad_core::dynamics::{
    observe_mod1, observe_mod2, observe_mono, reward_eval, reward_mod1, reward_mod2, reward_mono, sample_params,
    sample_state, step, trans_step, yaw_step, EnvConfig, GoalSpec, InitRanges, IntegralDecay, QuadParams, QuadState,
    RewardWeights, TransAction, TransState, WrenchAction, YawObs, YawState,
};
use equivquad_core::equivariance::check_equivariance;
use equivquad_core::geometry::{act_goal, act_mod1, act_mod2, act_mono_state, RefElement, RotElement, Vec3};
use equivquad_core::networks::{Flavor, Network, NetworkKind, NetworkSpec};
use equivquad_core::rl::{run_episodes, sample_starts, Agent};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deliberate corruption used to confirm the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Inputs are rotated with the sign of the angle flipped.
    FlipRhoTheta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub section: &'static str,
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub cases: usize,
    pub steps: usize,
    pub yaw_states: usize,
    pub network_samples: usize,
    pub rollout_steps: usize,
    pub seed: u64,
    pub fault: Fault,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            cases: 50,
            steps: 1000,
            yaw_states: 10_000,
            network_samples: 100,
            rollout_steps: 2000,
            seed: 0,
            fault: Fault::None,
        }
    }
}

fn input_rotation(theta: f64, fault: Fault) -> RotElement {
    match fault {
        Fault::None => RotElement::new(theta),
        Fault::FlipRhoTheta => RotElement::new(-theta),
    }
}

fn wide() -> InitRanges {
    InitRanges { position: 1.0, velocity: 1.0, angular_velocity: 1.0, attitude: 0.6 }
}

fn rvec(rng: &mut impl Rng, half: f64) -> Vec3 {
    Vec3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

fn random_state(rng: &mut impl Rng) -> QuadState {
    let mut s = sample_state(rng, &wide());
    s.e_ix = rvec(rng, 0.5);
    s.e_ib1 = rng.random_range(-0.5..0.5);
    s
}

fn random_goal(rng: &mut impl Rng) -> GoalSpec {
    let mut g = GoalSpec::with_yaw_rate(rng.random_range(-0.5..0.5));
    g.x_d = rvec(rng, 0.5);
    g
}

/// Rotate-then-roll against roll-then-rotate for the full rigid body.
/// Returns the worst position and Frobenius attitude discrepancies.
pub fn rotation_equivariance(opts: &SuiteOptions) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let decay = IntegralDecay::default();
    let dt = EnvConfig::default().dt;
    let (mut ex, mut er) = (0.0f64, 0.0f64);
    for _ in 0..opts.cases {
        let p = sample_params(&mut rng, 0.1);
        let s0 = random_state(&mut rng);
        let goal = random_goal(&mut rng);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let g = RotElement::new(theta);
        let gi = input_rotation(theta, opts.fault);
        let mut a = s0;
        let mut b = act_mono_state(&gi, &s0);
        let goal_b = act_goal(&gi, &goal);
        for _ in 0..opts.steps {
            let w = WrenchAction { f: p.weight() * rng.random_range(0.9..1.1), m: rvec(&mut rng, 0.01) };
            a = step(&a, &w, &p, &goal, &decay, dt).expect("bounded rollout");
            b = step(&b, &w, &p, &goal_b, &decay, dt).expect("bounded rollout");
            let ga = act_mono_state(&g, &a);
            ex = ex.max((ga.x - b.x).amax());
            er = er.max((ga.r - b.r).norm());
        }
    }
    (ex, er)
}

/// Same protocol for the translational module with rotated torques.
pub fn translational_equivariance(opts: &SuiteOptions) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let decay = IntegralDecay::default();
    let dt = EnvConfig::default().dt;
    let mut worst = 0.0f64;
    for _ in 0..opts.cases {
        let p = QuadParams::nominal();
        let s0 = TransState::from_quad(&random_state(&mut rng));
        let goal = GoalSpec::fixed_heading();
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let g = RotElement::new(theta);
        let gi = input_rotation(theta, opts.fault);
        let mut a = s0;
        let mut b = act_mod1(&gi, &s0, &TransAction { f: 0.0, tau: Vec3::zeros() }).0;
        for _ in 0..opts.steps {
            let u = TransAction { f: p.weight() * rng.random_range(0.9..1.1), tau: rvec(&mut rng, 0.01) };
            let gu = act_mod1(&gi, &a, &u).1;
            a = trans_step(&a, &u, &p, &goal, &decay, dt);
            b = trans_step(&b, &gu, &p, &goal, &decay, dt);
            let ga = act_mod1(&g, &a, &u).0;
            for (l, r) in [(ga.x, b.x), (ga.v, b.v), (ga.b3, b.b3), (ga.w12, b.w12), (ga.e_ix, b.e_ix)] {
                worst = worst.max((l - r).amax());
            }
        }
    }
    worst
}

/// One-step antisymmetry of the yaw module with a steady yaw command.
pub fn yaw_reflection(opts: &SuiteOptions) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    let p = QuadParams::nominal();
    let decay = IntegralDecay::default();
    let dt = EnvConfig::default().dt;
    let mut worst = 0.0f64;
    for _ in 0..opts.yaw_states {
        let s = YawState {
            e_b1: rng.random_range(-3.0..3.0),
            e_ib1: rng.random_range(-2.0..2.0),
            e_b1_dot: rng.random_range(-4.0..4.0),
        };
        let m3 = rng.random_range(-0.3..0.3);
        let a = yaw_step(&s, m3, 0.0, &p, &decay, dt);
        let (fs, fm) = act_mod2(&RefElement::Flip, &s, m3);
        let b = yaw_step(&fs, fm, 0.0, &p, &decay, dt);
        let back = act_mod2(&RefElement::Flip, &b, 0.0).0;
        worst = worst
            .max((a.e_b1 - back.e_b1).abs())
            .max((a.e_ib1 - back.e_ib1).abs())
            .max((a.e_b1_dot - back.e_b1_dot).abs());
    }
    worst
}

/// Rewards are unchanged by rotating the state and goal, and the yaw
/// reward by reflecting the yaw observation.
pub fn reward_invariance(opts: &SuiteOptions) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(3));
    let w = RewardWeights::default();
    let mut worst = 0.0f64;
    for _ in 0..opts.cases * 20 {
        let s = random_state(&mut rng);
        let goal = random_goal(&mut rng);
        let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let gi = input_rotation(theta, opts.fault);
        let gs = act_mono_state(&gi, &s);
        let gg = act_goal(&gi, &goal);
        let (m, gm) = (observe_mono(&s, &goal), observe_mono(&gs, &gg));
        let y = observe_mod2(&s, &goal);
        let fy = YawObs { e_b1: -y.e_b1, e_ib1: -y.e_ib1, e_b1_dot: -y.e_b1_dot };
        let diffs = [
            reward_mono(&m, &w, false) - reward_mono(&gm, &w, false),
            reward_mod1(&observe_mod1(&s, &goal), &w, false) - reward_mod1(&observe_mod1(&gs, &gg), &w, false),
            reward_mod2(&y, &w, false) - reward_mod2(&fy, &w, false),
            reward_eval(&m.e_x, m.e_b1) - reward_eval(&gm.e_x, gm.e_b1),
        ];
        worst = diffs.iter().fold(worst, |acc, d| acc.max(d.abs()));
    }
    worst
}

fn randomize_params(net: &mut Network, rng: &mut impl Rng, scale: f64) {
    let p: Vec<f64> = (0..net.n_params())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut *rng);
            scale * z
        })
        .collect();
    net.set_params(&p).expect("length matches");
}

/// Worst equivariance error of `net` over `samples` group elements.
pub fn network_error(net: &Network, samples: usize, seed: u64) -> f64 {
    check_equivariance(
        |x: &DVector<f64>| DVector::from_vec(net.predict_one(x.as_slice()).expect("dimensions match")),
        net.rho_in(),
        net.rho_out(),
        samples,
        seed,
    )
}

/// Equivariant networks of every kind with random coefficients.
pub fn layer_equivariance(opts: &SuiteOptions) -> Vec<(NetworkKind, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(4));
    let kinds =
        [NetworkKind::ActorMono, NetworkKind::CriticMono, NetworkKind::ActorMod1, NetworkKind::ActorMod2, NetworkKind::CriticCentral];
    kinds
        .into_iter()
        .map(|kind| {
            let mut net = Network::build(NetworkSpec::new(kind, Flavor::Equivariant), &mut rng).expect("network builds");
            let mut worst = 0.0f64;
            for k in 0..opts.network_samples {
                randomize_params(&mut net, &mut rng, 0.5);
                worst = worst.max(network_error(&net, 4, opts.seed.wrapping_add(k as u64)));
            }
            (kind, worst)
        })
        .collect()
}

/// Largest return gap between each start and its rotated copy.
pub fn return_equivalence(agent: &Agent, opts: &SuiteOptions) -> f64 {
    let cfg = EnvConfig { randomize: false, ..EnvConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(5));
    let starts = sample_starts(&cfg, 20, 0.0, opts.seed.wrapping_add(6));
    let rotated: Vec<_> = starts
        .iter()
        .map(|s| s.rotated(input_rotation(rng.random_range(-3.1..3.1), opts.fault).theta()))
        .collect();
    let a = run_episodes(agent, &cfg, &starts, opts.rollout_steps).expect("rollout");
    let b = run_episodes(agent, &cfg, &rotated, opts.rollout_steps).expect("rollout");
    a.iter()
        .zip(&b)
        .map(|(x, y)| if x.rows.len() == y.rows.len() { (x.ret - y.ret).abs() } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

/// Dynamics, reward and layer properties.
pub fn core_suite(opts: &SuiteOptions) -> Vec<PropertyResult> {
    let mut out = Vec::new();
    let (ex, er) = rotation_equivariance(opts);
    out.push(PropertyResult { section: "dynamics", name: "rotation/position".into(), max_error: ex, tolerance: 1e-6 });
    out.push(PropertyResult { section: "dynamics", name: "rotation/attitude".into(), max_error: er, tolerance: 1e-8 });
    out.push(PropertyResult {
        section: "dynamics",
        name: "translational-module".into(),
        max_error: translational_equivariance(opts),
        tolerance: 1e-6,
    });
    out.push(PropertyResult {
        section: "dynamics",
        name: "yaw-reflection".into(),
        max_error: yaw_reflection(opts),
        tolerance: 1e-10,
    });
    out.push(PropertyResult {
        section: "reward",
        name: "invariance".into(),
        max_error: reward_invariance(opts),
        tolerance: 1e-10,
    });
    for (kind, err) in layer_equivariance(opts) {
        out.push(PropertyResult { section: "layers", name: format!("{kind:?}"), max_error: err, tolerance: 1e-9 });
    }
    out
}

/// Networks stored in a checkpoint, plus rollout return equivalence.
pub fn agent_suite(agent: &Agent, opts: &SuiteOptions) -> Vec<PropertyResult> {
    let mut out: Vec<PropertyResult> = agent
        .networks()
        .into_iter()
        .map(|(name, net)| PropertyResult {
            section: "network",
            name,
            max_error: network_error(net, opts.network_samples, opts.seed),
            tolerance: 1e-9,
        })
        .collect();
    out.push(PropertyResult {
        section: "network",
        name: "return-equivalence".into(),
        max_error: return_equivalence(agent, opts),
        tolerance: 1e-6,
    });
    out
}
