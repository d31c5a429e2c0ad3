use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EquivarianceError;

/// The symmetry groups used by the networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    /// Rotations about the vertical axis.
    Rotation,
    /// Sign flips `{+1, -1}`.
    Reflection,
    /// Direct product of the two, acting on separate blocks.
    RotationReflection,
}

impl Group {
    pub fn lie_generator_count(&self) -> usize {
        match self {
            Group::Reflection => 0,
            _ => 1,
        }
    }

    pub fn discrete_generator_count(&self) -> usize {
        match self {
            Group::Rotation => 0,
            _ => 1,
        }
    }

    pub fn has_rotation(&self) -> bool {
        self.lie_generator_count() > 0
    }

    pub fn has_reflection(&self) -> bool {
        self.discrete_generator_count() > 0
    }
}

/// A group element `(theta, flip)`; components the group lacks are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupElement {
    pub theta: f64,
    pub flip: bool,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self { theta: 0.0, flip: false }
    }

    pub fn rotation(theta: f64) -> Self {
        Self { theta, flip: false }
    }

    pub fn reflection() -> Self {
        Self { theta: 0.0, flip: true }
    }

    pub fn random(group: Group, rng: &mut impl Rng) -> Self {
        let theta = if group.has_rotation() {
            rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
        } else {
            0.0
        };
        let flip = group.has_reflection() && rng.random_bool(0.5);
        Self { theta, flip }
    }
}

/// Irreducible (or small) building blocks a representation is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomKind {
    /// Acted on by the identity.
    Trivial,
    /// Planar rotation of an `(x, y)` pair; reflections act trivially.
    Pair,
    /// Rotation about `e3` of a 3-vector; reflections act trivially.
    Vector,
    /// Scalar negated by the reflection; rotations act trivially.
    Odd,
    /// Given only by its generators.
    Custom,
}

/// One block of a direct sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub kind: AtomKind,
    pub dim: usize,
    pub lie_gens: Vec<DMatrix<f64>>,
    pub disc_gens: Vec<DMatrix<f64>>,
}

fn rotation_generator(dim: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(dim, dim);
    l[(0, 1)] = -1.0;
    l[(1, 0)] = 1.0;
    l
}

impl Atom {
    fn standard(group: Group, kind: AtomKind) -> Self {
        let dim = match kind {
            AtomKind::Trivial | AtomKind::Odd => 1,
            AtomKind::Pair => 2,
            AtomKind::Vector => 3,
            AtomKind::Custom => unreachable!("custom atoms carry explicit generators"),
        };
        let lie_gens = if group.has_rotation() {
            let l = match kind {
                AtomKind::Pair | AtomKind::Vector => rotation_generator(dim),
                _ => DMatrix::zeros(dim, dim),
            };
            vec![l]
        } else {
            Vec::new()
        };
        let disc_gens = if group.has_reflection() {
            let d = match kind {
                AtomKind::Odd => -DMatrix::identity(1, 1),
                _ => DMatrix::identity(dim, dim),
            };
            vec![d]
        } else {
            Vec::new()
        };
        Self { kind, dim, lie_gens, disc_gens }
    }

    /// `exp(theta L) * D^flip`.
    pub fn matrix(&self, g: &GroupElement) -> DMatrix<f64> {
        let mut m = match (self.kind, self.lie_gens.first()) {
            (_, None) => DMatrix::identity(self.dim, self.dim),
            (AtomKind::Pair | AtomKind::Vector, Some(_)) => {
                let (s, c) = g.theta.sin_cos();
                let mut m = DMatrix::identity(self.dim, self.dim);
                m[(0, 0)] = c;
                m[(0, 1)] = -s;
                m[(1, 0)] = s;
                m[(1, 1)] = c;
                m
            }
            (AtomKind::Trivial | AtomKind::Odd, Some(_)) => DMatrix::identity(self.dim, self.dim),
            (AtomKind::Custom, Some(l)) => (l * g.theta).exp(),
        };
        if g.flip {
            if let Some(d) = self.disc_gens.first() {
                m *= d;
            }
        }
        m
    }
}

/// Finite-dimensional representation stored as a direct sum of atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    group: Group,
    atoms: Vec<Atom>,
}

impl Representation {
    fn single(group: Group, kind: AtomKind) -> Self {
        Self { group, atoms: vec![Atom::standard(group, kind)] }
    }

    /// `n` copies of the trivial representation.
    pub fn trivial(group: Group, n: usize) -> Self {
        Self { group, atoms: (0..n).map(|_| Atom::standard(group, AtomKind::Trivial)).collect() }
    }

    /// Rotation of a 3-vector about `e3`; its generator is `hat(e3)`.
    pub fn rho_theta(group: Group) -> Self {
        Self::single(group, AtomKind::Vector)
    }

    pub fn rotating_pair(group: Group) -> Self {
        Self::single(group, AtomKind::Pair)
    }

    /// Sign-flip scalar.
    pub fn rho_r(group: Group) -> Self {
        Self::single(group, AtomKind::Odd)
    }

    /// A representation given by explicit generators. Generator counts must
    /// match the group.
    pub fn from_generators(
        group: Group,
        lie_gens: Vec<DMatrix<f64>>,
        disc_gens: Vec<DMatrix<f64>>,
    ) -> Result<Self, EquivarianceError> {
        if lie_gens.len() != group.lie_generator_count() || disc_gens.len() != group.discrete_generator_count() {
            return Err(EquivarianceError::MixedGroups);
        }
        let dim = lie_gens.first().or(disc_gens.first()).map(|m| m.nrows()).unwrap_or(0);
        if dim == 0 || lie_gens.iter().chain(&disc_gens).any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(EquivarianceError::DimensionMismatch { expected: dim, found: 0 });
        }
        Ok(Self { group, atoms: vec![Atom { kind: AtomKind::Custom, dim, lie_gens, disc_gens }] })
    }

    pub fn repeat(&self, n: usize) -> Self {
        let atoms = (0..n).flat_map(|_| self.atoms.iter().cloned()).collect();
        Self { group: self.group, atoms }
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn dim(&self) -> usize {
        self.atoms.iter().map(|a| a.dim).sum()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Start index of each atom.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.atoms
            .iter()
            .map(|a| {
                let o = off;
                off += a.dim;
                o
            })
            .collect()
    }

    fn block_diag(&self, pick: impl Fn(&Atom) -> DMatrix<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (atom, off) in self.atoms.iter().zip(self.offsets()) {
            m.view_mut((off, off), (atom.dim, atom.dim)).copy_from(&pick(atom));
        }
        m
    }

    pub fn lie_gens(&self) -> Vec<DMatrix<f64>> {
        (0..self.group.lie_generator_count()).map(|i| self.block_diag(|a| a.lie_gens[i].clone())).collect()
    }

    pub fn disc_gens(&self) -> Vec<DMatrix<f64>> {
        (0..self.group.discrete_generator_count())
            .map(|i| self.block_diag(|a| a.disc_gens[i].clone()))
            .collect()
    }

    /// Matrix of the group element acting on this space.
    pub fn matrix(&self, g: &GroupElement) -> DMatrix<f64> {
        self.block_diag(|a| a.matrix(g))
    }

    /// Human-readable layout, e.g. `3xVector+2xTrivial`.
    pub fn describe(&self) -> String {
        let mut parts: Vec<(AtomKind, usize)> = Vec::new();
        for atom in &self.atoms {
            match parts.last_mut() {
                Some((k, n)) if *k == atom.kind => *n += 1,
                _ => parts.push((atom.kind, 1)),
            }
        }
        parts.iter().map(|(k, n)| format!("{n}x{k:?}")).collect::<Vec<_>>().join("+")
    }
}

/// Block-diagonal combination. All summands must be over the same group.
pub fn direct_sum(reps: &[Representation]) -> Result<Representation, EquivarianceError> {
    let first = reps.first().ok_or(EquivarianceError::EmptyDirectSum)?;
    let group = first.group;
    if reps.iter().any(|r| r.group != group) {
        return Err(EquivarianceError::MixedGroups);
    }
    Ok(Representation { group, atoms: reps.iter().flat_map(|r| r.atoms.iter().cloned()).collect() })
}
