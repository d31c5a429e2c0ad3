use nalgebra::{DMatrix, DVector};

use super::basis::{equivariant_basis, invariant_basis, BasisElement, InvariantElement};
use super::representation::{AtomKind, Representation};
use super::EquivarianceError;

/// Affine map `x -> W x + b` with `W` in the span of an equivariant basis
/// and `b` in the invariant subspace of the output.
///
/// `W` is stored as dense blocks between runs of same-kind atoms; blocks
/// that no basis element touches are identically zero and skipped.
#[derive(Debug, Clone)]
pub struct EquivariantLinear {
    rho_in: Representation,
    rho_out: Representation,
    basis: Vec<BasisElement>,
    bias_basis: Vec<InvariantElement>,
    coeffs: Vec<f64>,
    bias_coeffs: Vec<f64>,
    blocks: Vec<WeightBlock>,
    /// Block index and in-block offset of each basis element.
    placement: Vec<(usize, usize, usize)>,
    bias: DVector<f64>,
}

#[derive(Debug, Clone)]
struct WeightBlock {
    row: usize,
    col: usize,
    w: DMatrix<f64>,
    wt: DMatrix<f64>,
}

/// Gradients of a batched forward pass.
#[derive(Debug, Clone)]
pub struct LinearGrad {
    pub coeffs: Vec<f64>,
    pub bias_coeffs: Vec<f64>,
    pub input: DMatrix<f64>,
}

/// Contiguous runs of atoms of the same kind, as `(start, len)`.
fn segments(rep: &Representation) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize, AtomKind)> = Vec::new();
    for (atom, off) in rep.atoms().iter().zip(rep.offsets()) {
        match out.last_mut() {
            Some((_, len, kind)) if *kind == atom.kind && atom.kind != AtomKind::Custom => *len += atom.dim,
            _ => out.push((off, atom.dim, atom.kind)),
        }
    }
    out.into_iter().map(|(s, l, _)| (s, l)).collect()
}

fn locate(segs: &[(usize, usize)], i: usize) -> usize {
    segs.iter().position(|&(s, l)| i >= s && i < s + l).expect("index inside representation")
}

impl EquivariantLinear {
    /// Layer with all coefficients zero.
    pub fn new(rho_in: &Representation, rho_out: &Representation) -> Result<Self, EquivarianceError> {
        let basis = equivariant_basis(rho_in, rho_out)?;
        let bias_basis = invariant_basis(rho_out);
        let seg_in = segments(rho_in);
        let seg_out = segments(rho_out);
        let mut blocks: Vec<WeightBlock> = Vec::new();
        let mut keys: Vec<(usize, usize)> = Vec::new();
        let mut placement = Vec::with_capacity(basis.len());
        for b in &basis {
            let key = (locate(&seg_out, b.row), locate(&seg_in, b.col));
            let k = match keys.iter().position(|q| *q == key) {
                Some(k) => k,
                None => {
                    let (r0, rl) = seg_out[key.0];
                    let (c0, cl) = seg_in[key.1];
                    blocks.push(WeightBlock { row: r0, col: c0, w: DMatrix::zeros(rl, cl), wt: DMatrix::zeros(cl, rl) });
                    keys.push(key);
                    keys.len() - 1
                }
            };
            placement.push((k, b.row - blocks[k].row, b.col - blocks[k].col));
        }
        let (n, m) = (basis.len(), bias_basis.len());
        Ok(Self {
            bias: DVector::zeros(rho_out.dim()),
            rho_in: rho_in.clone(),
            rho_out: rho_out.clone(),
            basis,
            bias_basis,
            coeffs: vec![0.0; n],
            bias_coeffs: vec![0.0; m],
            blocks,
            placement,
        })
    }

    pub fn rho_in(&self) -> &Representation {
        &self.rho_in
    }

    pub fn rho_out(&self) -> &Representation {
        &self.rho_out
    }

    pub fn basis(&self) -> &[BasisElement] {
        &self.basis
    }

    pub fn bias_basis(&self) -> &[InvariantElement] {
        &self.bias_basis
    }

    pub fn basis_dense(&self) -> Vec<DMatrix<f64>> {
        self.basis.iter().map(|b| b.to_dense(self.rho_out.dim(), self.rho_in.dim())).collect()
    }

    pub fn n_params(&self) -> usize {
        self.coeffs.len() + self.bias_coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn bias_coeffs(&self) -> &[f64] {
        &self.bias_coeffs
    }

    /// Weight coefficients followed by bias coefficients.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.coeffs.clone();
        p.extend_from_slice(&self.bias_coeffs);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<(), EquivarianceError> {
        if p.len() != self.n_params() {
            return Err(EquivarianceError::DimensionMismatch { expected: self.n_params(), found: p.len() });
        }
        let n = self.coeffs.len();
        self.coeffs.copy_from_slice(&p[..n]);
        self.bias_coeffs.copy_from_slice(&p[n..]);
        self.rebuild();
        Ok(())
    }

    fn rebuild(&mut self) {
        for blk in self.blocks.iter_mut() {
            blk.w.fill(0.0);
        }
        for ((b, &(k, r, c)), coeff) in self.basis.iter().zip(&self.placement).zip(&self.coeffs) {
            let (h, w) = b.block.shape();
            let target = &mut self.blocks[k].w;
            for j in 0..w {
                for i in 0..h {
                    target[(r + i, c + j)] += coeff * b.block[(i, j)];
                }
            }
        }
        for blk in self.blocks.iter_mut() {
            blk.w.transpose_to(&mut blk.wt);
        }
        self.bias.fill(0.0);
        for (b, c) in self.bias_basis.iter().zip(&self.bias_coeffs) {
            let mut view = self.bias.rows_mut(b.offset, b.vector.len());
            view += &b.vector * *c;
        }
    }

    /// Dense weight matrix.
    pub fn weight(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rho_out.dim(), self.rho_in.dim());
        for blk in &self.blocks {
            m.view_mut((blk.row, blk.col), blk.w.shape()).copy_from(&blk.w);
        }
        m
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>, EquivarianceError> {
        if x.len() != self.rho_in.dim() {
            return Err(EquivarianceError::DimensionMismatch { expected: self.rho_in.dim(), found: x.len() });
        }
        let y = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
        Ok(y.column(0).into_owned())
    }

    /// Columns are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>, EquivarianceError> {
        if x.nrows() != self.rho_in.dim() {
            return Err(EquivarianceError::DimensionMismatch { expected: self.rho_in.dim(), found: x.nrows() });
        }
        let mut y = DMatrix::from_fn(self.rho_out.dim(), x.ncols(), |i, _| self.bias[i]);
        for blk in &self.blocks {
            let xs = x.rows(blk.col, blk.w.ncols());
            let mut ys = y.rows_mut(blk.row, blk.w.nrows());
            ys.gemm(1.0, &blk.w, &xs, 1.0);
        }
        Ok(y)
    }

    /// Gradient with respect to the input only.
    pub fn backward_input(&self, grad_out: &DMatrix<f64>) -> DMatrix<f64> {
        let mut dx = DMatrix::zeros(self.rho_in.dim(), grad_out.ncols());
        for blk in &self.blocks {
            let gs = grad_out.rows(blk.row, blk.w.nrows());
            let mut xs = dx.rows_mut(blk.col, blk.w.ncols());
            xs.gemm(1.0, &blk.wt, &gs, 1.0);
        }
        dx
    }

    /// Reverse pass for [`Self::forward_batch`] given its input and the
    /// gradient with respect to its output.
    pub fn backward_batch(&self, x: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> LinearGrad {
        let dws: Vec<DMatrix<f64>> = self
            .blocks
            .iter()
            .map(|blk| grad_out.rows(blk.row, blk.w.nrows()) * x.rows(blk.col, blk.w.ncols()).transpose())
            .collect();
        let db: DVector<f64> = grad_out.column_sum();
        let coeffs = self
            .basis
            .iter()
            .zip(&self.placement)
            .map(|(b, &(k, r, c))| {
                let (h, w) = b.block.shape();
                let dw = &dws[k];
                let mut s = 0.0;
                for j in 0..w {
                    for i in 0..h {
                        s += b.block[(i, j)] * dw[(r + i, c + j)];
                    }
                }
                s
            })
            .collect();
        let bias_coeffs =
            self.bias_basis.iter().map(|b| b.vector.dot(&db.rows(b.offset, b.vector.len()))).collect();
        LinearGrad { coeffs, bias_coeffs, input: self.backward_input(grad_out) }
    }
}
