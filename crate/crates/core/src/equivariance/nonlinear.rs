use nalgebra::DMatrix;

use super::representation::{AtomKind, Representation};

const SERIES_RADIUS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
enum Channel {
    /// `tanh(x + |v|^2)` where `v` is the optional coupled block.
    Scalar { idx: usize, coupled: Option<(usize, usize)> },
    /// `tanh(x)`, for sign-flip scalars.
    Odd { idx: usize },
    /// `v -> tanh(|v|) / |v| * v`.
    Gated { offset: usize, dim: usize },
}

/// Equivariant pointwise nonlinearity over the atoms of a representation.
///
/// Invariant scalars use `tanh`, sign-flip scalars `tanh`, and rotating
/// blocks are norm gated. In coupled mode the k-th invariant scalar also
/// receives the squared norm of the k-th non-trivial atom, which lets
/// rotating content reach invariant outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    dim: usize,
    channels: Vec<Channel>,
}

/// `tanh` through a single `exp`; odd by construction and accurate to a
/// few ulp in absolute terms.
pub fn tanh(x: f64) -> f64 {
    let a = x.abs();
    let t = if a < 0.02 {
        let a2 = a * a;
        a * (1.0 + a2 * (-1.0 / 3.0 + a2 * (2.0 / 15.0 + a2 * (-17.0 / 315.0 + a2 * 62.0 / 2835.0))))
    } else if a > 20.0 {
        1.0
    } else {
        1.0 - 2.0 / ((2.0 * a).exp() + 1.0)
    };
    t.copysign(x)
}

fn gate(r: f64) -> f64 {
    if r < SERIES_RADIUS {
        1.0 - r * r / 3.0
    } else {
        tanh(r) / r
    }
}

/// `gate'(r) / r`.
#[cfg(test)]
fn gate_slope(r: f64) -> f64 {
    gate_and_slope(r).1
}

fn gate_and_slope(r: f64) -> (f64, f64) {
    if r < SERIES_RADIUS {
        (1.0 - r * r / 3.0, -2.0 / 3.0 + 8.0 * r * r / 15.0)
    } else {
        let t = tanh(r);
        (t / r, (r * (1.0 - t * t) - t) / (r * r * r))
    }
}

impl Layout {
    pub fn plain(rep: &Representation) -> Self {
        Self::build(rep, false)
    }

    pub fn coupled(rep: &Representation) -> Self {
        Self::build(rep, true)
    }

    fn build(rep: &Representation, coupled: bool) -> Self {
        let offsets = rep.offsets();
        let others: Vec<(usize, usize)> = rep
            .atoms()
            .iter()
            .zip(&offsets)
            .filter(|(a, _)| a.kind != AtomKind::Trivial)
            .map(|(a, &o)| (o, a.dim))
            .collect();
        let mut next = 0;
        let channels = rep
            .atoms()
            .iter()
            .zip(&offsets)
            .map(|(a, &o)| match a.kind {
                AtomKind::Trivial => {
                    let c = if coupled { others.get(next).copied() } else { None };
                    next += 1;
                    Channel::Scalar { idx: o, coupled: c }
                }
                AtomKind::Odd => Channel::Odd { idx: o },
                _ => Channel::Gated { offset: o, dim: a.dim },
            })
            .collect();
        Self { dim: rep.dim(), channels }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Columns are samples.
    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let n = z.nrows();
        let mut y = z.clone();
        for (zc, yc) in z.as_slice().chunks_exact(n).zip(y.as_mut_slice().chunks_exact_mut(n)) {
            for ch in &self.channels {
                match *ch {
                    Channel::Scalar { idx, coupled } => {
                        let extra = coupled.map(|(o, d)| sq_norm(&zc[o..o + d])).unwrap_or(0.0);
                        yc[idx] = tanh(zc[idx] + extra);
                    }
                    Channel::Odd { idx } => yc[idx] = tanh(zc[idx]),
                    Channel::Gated { offset, dim } => {
                        let h = gate(sq_norm(&zc[offset..offset + dim]).sqrt());
                        for v in &mut yc[offset..offset + dim] {
                            *v *= h;
                        }
                    }
                }
            }
        }
        y
    }

    /// Gradient with respect to the pre-activation `z` given the output
    /// `y = apply(z)` and the gradient with respect to `y`.
    pub fn backprop(&self, z: &DMatrix<f64>, y: &DMatrix<f64>, grad_out: &DMatrix<f64>) -> DMatrix<f64> {
        let n = z.nrows();
        let mut dz = DMatrix::zeros(n, z.ncols());
        let cols = z
            .as_slice()
            .chunks_exact(n)
            .zip(y.as_slice().chunks_exact(n))
            .zip(grad_out.as_slice().chunks_exact(n))
            .zip(dz.as_mut_slice().chunks_exact_mut(n));
        for (((zc, yc), gc), dc) in cols {
            for ch in &self.channels {
                match *ch {
                    Channel::Scalar { idx, coupled } => {
                        let t = yc[idx];
                        let d = (1.0 - t * t) * gc[idx];
                        dc[idx] += d;
                        if let Some((o, len)) = coupled {
                            for k in o..o + len {
                                dc[k] += 2.0 * zc[k] * d;
                            }
                        }
                    }
                    Channel::Odd { idx } => {
                        let t = yc[idx];
                        dc[idx] += (1.0 - t * t) * gc[idx];
                    }
                    Channel::Gated { offset, dim } => {
                        let v = &zc[offset..offset + dim];
                        let g = &gc[offset..offset + dim];
                        let (h, slope) = gate_and_slope(sq_norm(v).sqrt());
                        let k = slope * v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        for i in 0..dim {
                            dc[offset + i] += h * g[i] + k * v[i];
                        }
                    }
                }
            }
        }
        dz
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivariance::{check_equivariance, direct_sum, Group};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hidden(g: Group) -> Representation {
        let mut parts = vec![Representation::trivial(g, 3), Representation::rotating_pair(g).repeat(2)];
        if g.has_reflection() {
            parts.push(Representation::rho_r(g).repeat(2));
        }
        direct_sum(&parts).unwrap()
    }

    fn col(v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v.as_slice())
    }

    #[test]
    fn zero_maps_to_zero() {
        let rep = hidden(Group::RotationReflection);
        for l in [Layout::plain(&rep), Layout::coupled(&rep)] {
            assert_eq!(l.apply(&DMatrix::zeros(rep.dim(), 2)), DMatrix::zeros(rep.dim(), 2));
        }
    }

    #[test]
    fn odd_channel_values() {
        let rep = Representation::rho_r(Group::Reflection);
        let l = Layout::plain(&rep);
        let y = l.apply(&DMatrix::from_row_slice(1, 2, &[0.5, -0.5]));
        assert!((y[(0, 0)] - 0.46211715726000974).abs() < 1e-15);
        assert!((y[(0, 1)] + 0.46211715726000974).abs() < 1e-15);
    }

    #[test]
    fn tanh_matches_libm() {
        for k in -4000..=4000 {
            let x = k as f64 * 0.01;
            assert!((tanh(x) - x.tanh()).abs() < 1e-15, "{x}");
            assert_eq!(tanh(-x), -tanh(x));
        }
        for x in [1e-300, 1e-12, 1e-8, 1e-4, 0.019, 0.021] {
            assert!(((tanh(x) - x.tanh()) / x).abs() < 1e-14, "{x}");
        }
        assert_eq!(tanh(0.0), 0.0);
    }

    #[test]
    fn gate_is_continuous_at_series_switch() {
        let a = gate(SERIES_RADIUS * (1.0 - 1e-9));
        let b = gate(SERIES_RADIUS * (1.0 + 1e-9));
        assert!((a - b).abs() < 1e-14);
        let a = gate_slope(SERIES_RADIUS * (1.0 - 1e-9));
        let b = gate_slope(SERIES_RADIUS * (1.0 + 1e-9));
        assert!((a - b).abs() < 1e-6);
        assert_eq!(gate(0.0), 1.0);
    }

    #[test]
    fn commutes_with_group() {
        for g in [Group::Rotation, Group::RotationReflection] {
            let rep = hidden(g);
            for l in [Layout::plain(&rep), Layout::coupled(&rep)] {
                let err = check_equivariance(|x| l.apply(&col(x)).column(0).into_owned(), &rep, &rep, 100, 4);
                assert!(err < 1e-12, "{err}");
            }
        }
    }

    #[test]
    fn coupling_lets_pairs_reach_scalars() {
        let rep = hidden(Group::Rotation);
        let mut z = DMatrix::zeros(rep.dim(), 1);
        z[(3, 0)] = 0.7;
        assert_eq!(Layout::plain(&rep).apply(&z)[(0, 0)], 0.0);
        assert!((Layout::coupled(&rep).apply(&z)[(0, 0)] - 0.49f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rep = hidden(Group::RotationReflection);
        let l = Layout::coupled(&rep);
        let mut z = DMatrix::from_fn(rep.dim(), 3, |_, _| rng.random_range(-1.5..1.5));
        // one near-zero pair to exercise the series branch
        z[(3, 2)] = 1e-6;
        z[(4, 2)] = -2e-6;
        let w = DMatrix::from_fn(rep.dim(), 3, |_, _| rng.random_range(-1.0..1.0));
        let dz = l.backprop(&z, &l.apply(&z), &w);
        let h = 1e-6;
        for i in 0..z.nrows() {
            for s in 0..z.ncols() {
                let mut zp = z.clone();
                zp[(i, s)] += h;
                let mut zm = z.clone();
                zm[(i, s)] -= h;
                let fd = (l.apply(&zp).dot(&w) - l.apply(&zm).dot(&w)) / (2.0 * h);
                assert!((fd - dz[(i, s)]).abs() < 1e-7, "{i} {s}: {fd} vs {}", dz[(i, s)]);
            }
        }
    }
}
