//! Actor and critic networks, equivariant or unconstrained, with batched
//! reverse-mode gradients.
//!
//! Inputs and outputs are matrices whose columns are samples. A call to
//! [`Network::forward`] records a tape that [`Network::backward`] consumes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equivariance::{direct_sum, tanh, EquivarianceError, EquivariantLinear, Group, Layout, Representation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("backward called without a recorded forward pass")]
    NoRecordedForward,
    #[error(transparent)]
    Equivariance(#[from] EquivarianceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    ActorMono,
    CriticMono,
    ActorMod1,
    ActorMod2,
    CriticCentral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Equivariant,
    Baseline,
}

impl NetworkKind {
    pub fn is_actor(&self) -> bool {
        matches!(self, NetworkKind::ActorMono | NetworkKind::ActorMod1 | NetworkKind::ActorMod2)
    }

    /// Hidden width in channels.
    pub fn default_hidden(&self) -> usize {
        match self {
            NetworkKind::CriticMono | NetworkKind::CriticCentral => 62,
            NetworkKind::ActorMono => 24,
            NetworkKind::ActorMod1 => 16,
            NetworkKind::ActorMod2 => 4,
        }
    }

    pub fn group(&self) -> Group {
        match self {
            NetworkKind::ActorMono | NetworkKind::CriticMono | NetworkKind::ActorMod1 => Group::Rotation,
            NetworkKind::ActorMod2 => Group::Reflection,
            NetworkKind::CriticCentral => Group::RotationReflection,
        }
    }

    /// Input and output representations.
    pub fn reps(&self) -> (Representation, Representation) {
        let g = self.group();
        let one = |r: Result<Representation, EquivarianceError>| r.expect("static layout");
        let obs_mono = || one(direct_sum(&[Representation::rho_theta(g).repeat(6), Representation::trivial(g, 5)]));
        let act_mono = || Representation::trivial(g, 4);
        let obs_mod1 = || Representation::rho_theta(g).repeat(5);
        let act_mod1 = || one(direct_sum(&[Representation::trivial(g, 1), Representation::rho_theta(g)]));
        let obs_mod2 = || Representation::rho_r(g).repeat(3);
        let act_mod2 = || Representation::rho_r(g);
        let scalar = Representation::trivial(g, 1);
        match self {
            NetworkKind::ActorMono => (obs_mono(), act_mono()),
            NetworkKind::CriticMono => (one(direct_sum(&[obs_mono(), act_mono()])), scalar),
            NetworkKind::ActorMod1 => (obs_mod1(), act_mod1()),
            NetworkKind::ActorMod2 => (obs_mod2(), act_mod2()),
            NetworkKind::CriticCentral => {
                (one(direct_sum(&[obs_mod1(), obs_mod2(), act_mod1(), act_mod2()])), scalar)
            }
        }
    }

    /// Hidden representation with `channels` irreducible channels.
    pub fn hidden_rep(&self, channels: usize) -> Representation {
        let g = self.group();
        let n_t = channels.div_ceil(2);
        let rest = channels - n_t;
        let parts = match g {
            Group::Rotation => vec![Representation::trivial(g, n_t), Representation::rotating_pair(g).repeat(rest)],
            Group::Reflection => vec![Representation::trivial(g, n_t), Representation::rho_r(g).repeat(rest)],
            Group::RotationReflection => {
                let pairs = rest.div_ceil(2);
                vec![
                    Representation::trivial(g, n_t),
                    Representation::rotating_pair(g).repeat(pairs),
                    Representation::rho_r(g).repeat(rest - pairs),
                ]
            }
        };
        let parts: Vec<_> = parts.into_iter().filter(|r| r.dim() > 0).collect();
        direct_sum(&parts).expect("static layout")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub flavor: Flavor,
    pub hidden: usize,
}

impl NetworkSpec {
    pub fn new(kind: NetworkKind, flavor: Flavor) -> Self {
        Self { kind, flavor, hidden: kind.default_hidden() }
    }
}

#[derive(Debug, Clone)]
struct Dense {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Affine {
    Equivariant(EquivariantLinear),
    Dense(Dense),
}

impl Affine {
    fn n_params(&self) -> usize {
        match self {
            Affine::Equivariant(l) => l.n_params(),
            Affine::Dense(d) => d.w.len() + d.b.len(),
        }
    }

    fn in_dim(&self) -> usize {
        match self {
            Affine::Equivariant(l) => l.rho_in().dim(),
            Affine::Dense(d) => d.w.ncols(),
        }
    }

    fn params_into(&self, out: &mut Vec<f64>) {
        match self {
            Affine::Equivariant(l) => out.extend(l.params()),
            Affine::Dense(d) => {
                out.extend_from_slice(d.w.as_slice());
                out.extend_from_slice(d.b.as_slice());
            }
        }
    }

    fn set_params(&mut self, p: &[f64]) -> Result<(), NetworkError> {
        match self {
            Affine::Equivariant(l) => l.set_params(p)?,
            Affine::Dense(d) => {
                let n = d.w.len();
                d.w.as_mut_slice().copy_from_slice(&p[..n]);
                d.b.as_mut_slice().copy_from_slice(&p[n..]);
            }
        }
        Ok(())
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Affine::Equivariant(l) => l.forward_batch(x).expect("input dimension checked by the network"),
            Affine::Dense(d) => {
                let mut y = &d.w * x;
                for mut col in y.column_iter_mut() {
                    col += &d.b;
                }
                y
            }
        }
    }

    fn backward_input(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Affine::Equivariant(l) => l.backward_input(g),
            Affine::Dense(d) => d.w.transpose() * g,
        }
    }

    /// Appends parameter gradients, returns the input gradient.
    fn backward(&self, x: &DMatrix<f64>, g: &DMatrix<f64>, out: &mut Vec<f64>) -> DMatrix<f64> {
        match self {
            Affine::Equivariant(l) => {
                let grad = l.backward_batch(x, g);
                out.extend(grad.coeffs);
                out.extend(grad.bias_coeffs);
                grad.input
            }
            Affine::Dense(d) => {
                let dw = g * x.transpose();
                out.extend_from_slice(dw.as_slice());
                out.extend_from_slice(g.column_sum().as_slice());
                d.w.transpose() * g
            }
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialisation. For equivariant layers
    /// fan-in counts basis elements feeding each output atom.
    fn init(&mut self, rng: &mut impl Rng) {
        match self {
            Affine::Equivariant(l) => {
                let rows: Vec<usize> = l.basis().iter().map(|b| b.row).collect();
                let fan = |r: usize| rows.iter().filter(|&&q| q == r).count().max(1) as f64;
                let mut p: Vec<f64> = rows.iter().map(|&r| rng.random_range(-1.0..1.0) / fan(r).sqrt()).collect();
                let bias: Vec<f64> = l
                    .bias_basis()
                    .iter()
                    .map(|b| rng.random_range(-1.0..1.0) / fan(b.offset).sqrt())
                    .collect();
                p.extend(bias);
                l.set_params(&p).expect("length matches");
            }
            Affine::Dense(d) => {
                let s = 1.0 / (d.w.ncols() as f64).sqrt();
                d.w.iter_mut().for_each(|x| *x = rng.random_range(-s..s));
                d.b.iter_mut().for_each(|x| *x = rng.random_range(-s..s));
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Activation {
    Layout(Layout),
    Tanh,
    Identity,
}

impl Activation {
    fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Layout(l) => l.apply(z),
            Activation::Tanh => z.map(tanh),
            Activation::Identity => z.clone(),
        }
    }

    fn backprop(&self, z: &DMatrix<f64>, y: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Activation::Layout(l) => l.backprop(z, y, g),
            Activation::Tanh => g.zip_map(y, |g, y| g * (1.0 - y * y)),
            Activation::Identity => g.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Tape {
    /// Layer inputs, pre-activations and activations.
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    post: Vec<DMatrix<f64>>,
}

/// Gradients of `sum(grad_out .* output)`.
#[derive(Debug, Clone)]
pub struct NetworkGrad {
    pub params: Vec<f64>,
    pub input: DMatrix<f64>,
}

/// Two hidden layers and an output layer.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    rho_in: Representation,
    rho_out: Representation,
    layers: Vec<(Affine, Activation)>,
    tape: Option<Tape>,
}

impl Network {
    pub fn build(spec: NetworkSpec, rng: &mut impl Rng) -> Result<Self, NetworkError> {
        let (rho_in, rho_out) = spec.kind.reps();
        let actor = spec.kind.is_actor();
        let mut layers = Vec::new();
        match spec.flavor {
            Flavor::Equivariant => {
                let hidden = spec.kind.hidden_rep(spec.hidden);
                let dims = [&rho_in, &hidden, &hidden, &rho_out];
                for k in 0..3 {
                    let lin = EquivariantLinear::new(dims[k], dims[k + 1])?;
                    let act = if k < 2 {
                        Activation::Layout(Layout::coupled(&hidden))
                    } else if actor {
                        Activation::Layout(Layout::plain(&rho_out))
                    } else {
                        Activation::Identity
                    };
                    layers.push((Affine::Equivariant(lin), act));
                }
            }
            Flavor::Baseline => {
                let dims = [rho_in.dim(), spec.hidden, spec.hidden, rho_out.dim()];
                for k in 0..3 {
                    let dense = Dense { w: DMatrix::zeros(dims[k + 1], dims[k]), b: DVector::zeros(dims[k + 1]) };
                    let act = if k < 2 || actor { Activation::Tanh } else { Activation::Identity };
                    layers.push((Affine::Dense(dense), act));
                }
            }
        }
        for (a, _) in layers.iter_mut() {
            a.init(rng);
        }
        Ok(Self { spec, rho_in, rho_out, layers, tape: None })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn rho_in(&self) -> &Representation {
        &self.rho_in
    }

    pub fn rho_out(&self) -> &Representation {
        &self.rho_out
    }

    pub fn in_dim(&self) -> usize {
        self.rho_in.dim()
    }

    pub fn out_dim(&self) -> usize {
        self.rho_out.dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|(a, _)| a.n_params()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (a, _) in &self.layers {
            a.params_into(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), NetworkError> {
        if p.len() != self.n_params() {
            return Err(NetworkError::DimensionMismatch { expected: self.n_params(), found: p.len() });
        }
        let mut off = 0;
        for (a, _) in self.layers.iter_mut() {
            let n = a.n_params();
            a.set_params(&p[off..off + n])?;
            off += n;
        }
        self.tape = None;
        Ok(())
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<(), NetworkError> {
        let expected = self.layers[0].0.in_dim();
        if x.nrows() != expected {
            return Err(NetworkError::DimensionMismatch { expected, found: x.nrows() });
        }
        Ok(())
    }

    /// Batched evaluation without recording.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NetworkError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (a, act) in &self.layers {
            h = act.apply(&a.forward(&h));
        }
        Ok(h)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let y = self.predict(&DMatrix::from_column_slice(x.len(), 1, x))?;
        Ok(y.as_slice().to_vec())
    }

    /// Batched evaluation recording a tape for [`Self::backward`].
    pub fn forward(&mut self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, NetworkError> {
        self.check_input(x)?;
        let mut tape = Tape { inputs: Vec::new(), pre: Vec::new(), post: Vec::new() };
        let mut h = x.clone();
        for (a, act) in &self.layers {
            let z = a.forward(&h);
            let y = act.apply(&z);
            tape.inputs.push(h);
            tape.pre.push(z);
            h = y.clone();
            tape.post.push(y);
        }
        self.tape = Some(tape);
        Ok(h)
    }

    /// Gradient of `sum(grad_out .* y)` for the recorded forward pass.
    /// The tape is kept, so several backward passes may follow one forward.
    pub fn backward(&self, grad_out: &DMatrix<f64>) -> Result<NetworkGrad, NetworkError> {
        let tape = self.tape.as_ref().ok_or(NetworkError::NoRecordedForward)?;
        let last = tape.post.last().expect("non-empty network");
        if grad_out.shape() != last.shape() {
            return Err(NetworkError::DimensionMismatch { expected: last.nrows(), found: grad_out.nrows() });
        }
        let mut g = grad_out.clone();
        let mut chunks: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (k, (a, act)) in self.layers.iter().enumerate().rev() {
            let dz = act.backprop(&tape.pre[k], &tape.post[k], &g);
            let mut chunk = Vec::with_capacity(a.n_params());
            g = a.backward(&tape.inputs[k], &dz, &mut chunk);
            chunks.push(chunk);
        }
        let params = chunks.into_iter().rev().flatten().collect();
        Ok(NetworkGrad { params, input: g })
    }

    /// Gradient of `sum(grad_out .* y)` with respect to the input only.
    pub fn backward_input(&self, grad_out: &DMatrix<f64>) -> Result<DMatrix<f64>, NetworkError> {
        let tape = self.tape.as_ref().ok_or(NetworkError::NoRecordedForward)?;
        let last = tape.post.last().expect("non-empty network");
        if grad_out.shape() != last.shape() {
            return Err(NetworkError::DimensionMismatch { expected: last.nrows(), found: grad_out.nrows() });
        }
        let mut g = grad_out.clone();
        for (k, (a, act)) in self.layers.iter().enumerate().rev() {
            let dz = act.backprop(&tape.pre[k], &tape.post[k], &g);
            g = a.backward_input(&dz);
        }
        Ok(g)
    }

    pub fn clear_tape(&mut self) {
        self.tape = None;
    }
}
