//! Bases of equivariant linear maps and invariant vectors, solved as
//! nullspaces of the linearised equivariance constraints.
//!
//! Generators are block diagonal over atoms, so the constraint operator is
//! block diagonal over (output atom, input atom) pairs and each block is
//! solved independently. Identical atom pairs reuse one solution.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::representation::{Atom, Representation};
use super::EquivarianceError;

/// Singular values below this span the nullspace.
pub const NULLSPACE_THRESHOLD: f64 = 1e-10;
const CLEAN_THRESHOLD: f64 = 1e-14;

/// One element of an equivariant basis: a dense block placed at
/// `(row, col)` of an otherwise zero `dim_out x dim_in` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisElement {
    pub row: usize,
    pub col: usize,
    pub block: DMatrix<f64>,
}

impl BasisElement {
    pub fn to_dense(&self, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(rows, cols);
        m.view_mut((self.row, self.col), self.block.shape()).copy_from(&self.block);
        m
    }
}

/// An invariant vector supported on `offset..offset + vector.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantElement {
    pub offset: usize,
    pub vector: DVector<f64>,
}

impl InvariantElement {
    pub fn to_dense(&self, dim: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v.rows_mut(self.offset, self.vector.len()).copy_from(&self.vector);
        v
    }
}

/// Orthonormal basis of the nullspace of `c`.
pub fn nullspace(c: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = c.ncols();
    if n == 0 {
        return Vec::new();
    }
    // pad so the SVD returns a full set of right singular vectors
    let padded = if c.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), c.shape()).copy_from(c);
        p
    } else {
        c.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let mut out: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < NULLSPACE_THRESHOLD)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    for v in out.iter_mut() {
        clean(v.as_mut_slice());
    }
    orthonormalize(out)
}

fn clean(xs: &mut [f64]) {
    for x in xs.iter_mut() {
        if x.abs() < CLEAN_THRESHOLD {
            *x = 0.0;
        }
    }
}

fn orthonormalize(vs: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        for u in &out {
            let p = u.dot(&v);
            v -= u * p;
        }
        let n = v.norm();
        if n > 1e-8 {
            out.push(v / n);
        }
    }
    out
}

/// Stacked constraint operator on column-major `vec(W)` for
/// `W: in -> out` given matching generator lists.
fn map_constraint(
    lie_in: &[DMatrix<f64>],
    lie_out: &[DMatrix<f64>],
    disc_in: &[DMatrix<f64>],
    disc_out: &[DMatrix<f64>],
    d_in: usize,
    d_out: usize,
) -> DMatrix<f64> {
    let n = d_in * d_out;
    let eye_in = DMatrix::<f64>::identity(d_in, d_in);
    let eye_out = DMatrix::<f64>::identity(d_out, d_out);
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    for (li, lo) in lie_in.iter().zip(lie_out) {
        // vec(L_out W - W L_in)
        blocks.push(eye_in.kronecker(lo) - li.transpose().kronecker(&eye_out));
    }
    for (di, dout) in disc_in.iter().zip(disc_out) {
        // vec(D_out W D_in^-1 - W)
        let di_inv = di.clone().try_inverse().expect("discrete generator must be invertible");
        blocks.push(di_inv.transpose().kronecker(dout) - DMatrix::identity(n, n));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut c = DMatrix::zeros(rows, n);
    let mut r = 0;
    for b in blocks {
        c.view_mut((r, 0), b.shape()).copy_from(&b);
        r += b.nrows();
    }
    c
}

fn atom_pair_basis(atom_in: &Atom, atom_out: &Atom) -> Vec<DMatrix<f64>> {
    let c = map_constraint(
        &atom_in.lie_gens,
        &atom_out.lie_gens,
        &atom_in.disc_gens,
        &atom_out.disc_gens,
        atom_in.dim,
        atom_out.dim,
    );
    nullspace(&c)
        .into_iter()
        .map(|v| DMatrix::from_column_slice(atom_out.dim, atom_in.dim, v.as_slice()))
        .collect()
}

fn check_groups(a: &Representation, b: &Representation) -> Result<(), EquivarianceError> {
    if a.group() != b.group() {
        return Err(EquivarianceError::MixedGroups);
    }
    Ok(())
}

/// Indices of distinct atoms, so repeated blocks share one solve.
fn atom_classes(atoms: &[Atom], uniq: &mut Vec<Atom>) -> Vec<usize> {
    atoms
        .iter()
        .map(|a| match uniq.iter().position(|u| u == a) {
            Some(i) => i,
            None => {
                uniq.push(a.clone());
                uniq.len() - 1
            }
        })
        .collect()
}

/// Orthonormal (Frobenius) basis of `{W : rho_out(g) W = W rho_in(g)}`.
pub fn equivariant_basis(
    rho_in: &Representation,
    rho_out: &Representation,
) -> Result<Vec<BasisElement>, EquivarianceError> {
    check_groups(rho_in, rho_out)?;
    let mut uniq = Vec::new();
    let cls_in = atom_classes(rho_in.atoms(), &mut uniq);
    let cls_out = atom_classes(rho_out.atoms(), &mut uniq);
    let mut cache: HashMap<(usize, usize), Vec<DMatrix<f64>>> = HashMap::new();
    let off_in = rho_in.offsets();
    let off_out = rho_out.offsets();
    let mut out = Vec::new();
    for (j, &co) in cls_out.iter().enumerate() {
        for (i, &ci) in cls_in.iter().enumerate() {
            let blocks = cache
                .entry((co, ci))
                .or_insert_with(|| atom_pair_basis(&uniq[ci], &uniq[co]));
            for b in blocks.iter() {
                out.push(BasisElement { row: off_out[j], col: off_in[i], block: b.clone() });
            }
        }
    }
    Ok(out)
}

/// Same space as [`equivariant_basis`], from one solve over the full
/// (non-decomposed) generators. Dense; intended for small representations.
pub fn equivariant_basis_dense(
    rho_in: &Representation,
    rho_out: &Representation,
) -> Result<Vec<DMatrix<f64>>, EquivarianceError> {
    check_groups(rho_in, rho_out)?;
    let c = map_constraint(
        &rho_in.lie_gens(),
        &rho_out.lie_gens(),
        &rho_in.disc_gens(),
        &rho_out.disc_gens(),
        rho_in.dim(),
        rho_out.dim(),
    );
    Ok(nullspace(&c)
        .into_iter()
        .map(|v| DMatrix::from_column_slice(rho_out.dim(), rho_in.dim(), v.as_slice()))
        .collect())
}

/// Orthonormal basis of the fixed subspace `{b : rho(g) b = b}`.
pub fn invariant_basis(rho: &Representation) -> Vec<InvariantElement> {
    let mut out = Vec::new();
    for (atom, off) in rho.atoms().iter().zip(rho.offsets()) {
        let d = atom.dim;
        let mut blocks: Vec<DMatrix<f64>> = atom.lie_gens.clone();
        blocks.extend(atom.disc_gens.iter().map(|m| m - DMatrix::identity(d, d)));
        let mut c = DMatrix::zeros(d * blocks.len().max(1), d);
        for (k, b) in blocks.iter().enumerate() {
            c.view_mut((k * d, 0), (d, d)).copy_from(b);
        }
        for v in nullspace(&c) {
            out.push(InvariantElement { offset: off, vector: v });
        }
    }
    out
}

/// Largest residual `|rho_out(g) B - B rho_in(g)|_inf` over the given elements.
pub fn basis_residual(
    basis: &[BasisElement],
    rho_in: &Representation,
    rho_out: &Representation,
    elements: &[super::GroupElement],
) -> f64 {
    let mut worst: f64 = 0.0;
    for g in elements {
        let mi = rho_in.matrix(g);
        let mo = rho_out.matrix(g);
        for b in basis {
            let dense = b.to_dense(rho_out.dim(), rho_in.dim());
            let r = (&mo * &dense - &dense * &mi).abs().max();
            worst = worst.max(r);
        }
    }
    worst
}
