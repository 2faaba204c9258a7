//! Periodic rectangular lattices and the centered finite-difference stencil
//! shared by coin synthesis, tetrad derivatives and the reference solver.

use crate::error::{Error, Result};
use crate::matcore::ComplexMatrix;

/// Number of points in the fourth-order central stencil.
pub const STENCIL_WIDTH: usize = 5;

/// Row-major periodic lattice. The last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("lattice needs at least one axis".into()));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("axis {axis} has zero length")));
        }
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len() - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        Ok(Self {
            dims: dims.to_vec(),
            strides,
            len: dims.iter().product(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.strides).map(|(c, s)| c * s).sum()
    }

    pub fn coords(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (a, c) in out.iter_mut().enumerate() {
            *c = index / self.strides[a];
            index %= self.strides[a];
        }
        out
    }

    /// Coordinate of `index` along one axis.
    #[inline]
    pub fn coord(&self, index: usize, axis: usize) -> usize {
        (index / self.strides[axis]) % self.dims[axis]
    }

    /// Site reached from `index` by moving `delta` sites along `axis`, with
    /// periodic wrap.
    #[inline]
    pub fn shift(&self, index: usize, axis: usize, delta: isize) -> usize {
        let n = self.dims[axis] as isize;
        let c = self.coord(index, axis) as isize;
        let to = (c + delta).rem_euclid(n);
        (index as isize + (to - c) * self.strides[axis] as isize) as usize
    }

    /// Physical position `X = eps * x` of a site.
    pub fn position(&self, index: usize, eps: f64) -> Vec<f64> {
        self.coords(index).into_iter().map(|c| eps * c as f64).collect()
    }
}

/// Fourth-order central difference of matrix samples
/// `f(x-2h), f(x-h), f(x+h), f(x+2h)`.
pub fn fd4_matrix(
    m2: &ComplexMatrix,
    m1: &ComplexMatrix,
    p1: &ComplexMatrix,
    p2: &ComplexMatrix,
    h: f64,
) -> ComplexMatrix {
    let w = 1.0 / (12.0 * h);
    ComplexMatrix::from_fn(m2.rows(), m2.cols(), |i, j| {
        (m2[(i, j)] - p2[(i, j)] + (p1[(i, j)] - m1[(i, j)]) * 8.0) * w
    })
}

/// Fourth-order central difference of real samples.
#[inline]
pub fn fd4_real(m2: f64, m1: f64, p1: f64, p2: f64, h: f64) -> f64 {
    (m2 - p2 + 8.0 * (p1 - m1)) / (12.0 * h)
}

/// Derivative of a per-site matrix field along `axis`. Lines whose stencil
/// samples are bitwise identical get an exact zero.
pub fn derivative_along(
    grid: &Grid,
    field: &[ComplexMatrix],
    axis: usize,
    h: f64,
    site: usize,
) -> Result<ComplexMatrix> {
    let at = |d: isize| &field[grid.shift(site, axis, d)];
    let (m2, m1, c, p1, p2) = (at(-2), at(-1), at(0), at(1), at(2));
    if [m2, m1, p1, p2].iter().all(|m| *m == c) {
        return Ok(ComplexMatrix::zeros(c.rows(), c.cols()));
    }
    if grid.dims()[axis] < STENCIL_WIDTH {
        return Err(Error::InvalidArgument(format!(
            "grid shorter than stencil: axis {axis} has {} sites, a varying field needs at least {STENCIL_WIDTH}",
            grid.dims()[axis]
        )));
    }
    Ok(fd4_matrix(m2, m1, p1, p2, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let g = Grid::new(&[4, 6, 8]).unwrap();
        assert_eq!(g.len(), 192);
        for i in 0..g.len() {
            assert_eq!(g.index(&g.coords(i)), i);
        }
        let i = g.index(&[3, 5, 7]);
        assert_eq!(g.coords(g.shift(i, 0, 1)), vec![0, 5, 7]);
        assert_eq!(g.coords(g.shift(i, 1, -6)), vec![3, 5, 7]);
        assert_eq!(g.coords(g.shift(i, 2, 3)), vec![3, 5, 2]);
        assert_eq!(g.coord(i, 1), 5);
    }

    #[test]
    fn fd4_is_exact_on_quartics() {
        let h = 0.1;
        let f = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x.powi(3) + 0.25 * x.powi(4);
        let df = |x: f64| 1.0 - 4.0 * x + 1.5 * x * x + x.powi(3);
        let x = 0.3;
        let d = fd4_real(f(x - 2.0 * h), f(x - h), f(x + h), f(x + 2.0 * h), h);
        assert!((d - df(x)).abs() < 1e-12);
    }

    #[test]
    fn short_axis_rejected_only_when_varying() {
        let g = Grid::new(&[4]).unwrap();
        let flat = vec![ComplexMatrix::identity(2); 4];
        assert_eq!(
            derivative_along(&g, &flat, 0, 0.1, 0).unwrap(),
            ComplexMatrix::zeros(2, 2)
        );
        let mut varying = flat;
        varying[1] = ComplexMatrix::zeros(2, 2);
        assert!(derivative_along(&g, &varying, 0, 0.1, 0).is_err());
    }
}
