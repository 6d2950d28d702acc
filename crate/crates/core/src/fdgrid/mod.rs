//! Uniform-grid finite differences on `[-1, 1]^2`.
//!
//! Nodes sit at `x_k = -1 + k h`, `h = 2 / (n - 1)`, including the boundary.
//! Fields are stored row-major with `x1` varying fastest:
//! `index = i2 * n + i1`.

mod io;
mod operators;
mod sparse;

pub use io::{pgm_sidecar, read_csv, write_csv, write_pgm};
pub use operators::{
    assemble_dirichlet_diffusion, assemble_neumann_helmholtz, coefficient_derivative,
    dirichlet_apply, flux_pairing, gradient_centered, neumann_apply, neumann_laplacian_weighted,
    pairing_matrix, solve_dirichlet_diffusion, solve_neumann_helmholtz, trapezoid_weights,
    Smoothing, SmoothingKind,
};
pub use sparse::{sparse_solve, Factorization, SparseOperator, SOLVE_TOL};

pub(crate) use sparse::norm;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    n: usize,
    h: f64,
}

impl Grid2D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(n));
        }
        Ok(Self {
            n,
            h: 2.0 / (n - 1) as f64,
        })
    }

    /// Nodes per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Total number of nodes, `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, k: usize) -> f64 {
        -1.0 + k as f64 * self.h
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i2 * self.n + i1
    }

    pub fn node(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        let (i1, i2) = self.node(idx);
        (self.coord(i1), self.coord(i2))
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i1, i2) = self.node(idx);
        i1 == 0 || i2 == 0 || i1 == self.n - 1 || i2 == self.n - 1
    }

    /// Full indices of interior nodes, in storage order.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.is_boundary(k)).collect()
    }

    /// In-domain 5-point neighbours of a node (W, E, S, N order, skipping
    /// missing ones).
    pub fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> {
        let (i1, i2) = self.node(idx);
        let n = self.n;
        [
            (i1 > 0).then(|| idx - 1),
            (i1 + 1 < n).then(|| idx + 1),
            (i2 > 0).then(|| idx - n),
            (i2 + 1 < n).then(|| idx + n),
        ]
        .into_iter()
        .flatten()
    }
}

/// Nodal values on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid2D, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values for n = {}, got {}",
                grid.len(),
                grid.n(),
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            data: vec![c; grid.len()],
        }
    }

    /// Samples `f(x1, x2)` at every node.
    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|k| {
                let (x1, x2) = grid.point(k);
                f(x1, x2)
            })
            .collect();
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "n = {} vs n = {}",
                self.grid.n(),
                other.grid.n()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        self.same_grid(other)?;
        Ok(ScalarField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Result<ScalarField> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Discrete L2 norm with weight `h^2` per node.
    pub fn l2_norm(&self) -> f64 {
        self.grid.h * self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l2_inner(&self, other: &ScalarField) -> Result<f64> {
        self.same_grid(other)?;
        let h2 = self.grid.h * self.grid.h;
        Ok(h2 * self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum::<f64>())
    }
}

pub fn l2_norm(f: &ScalarField) -> f64 {
    f.l2_norm()
}

pub fn l2_inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    f.l2_inner(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = Grid2D::new(5).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.index(1, 2), 11);
        assert_eq!(g.node(11), (1, 2));
        assert_eq!(g.point(11), (-0.5, 0.0));
        assert!(g.is_boundary(4) && g.is_boundary(20) && !g.is_boundary(12));
        assert_eq!(g.interior().len(), 9);
        assert_eq!(g.neighbours(0).collect::<Vec<_>>(), vec![1, 5]);
        assert_eq!(g.neighbours(12).count(), 4);
        assert!(Grid2D::new(2).is_err());
    }

    #[test]
    fn norms() {
        for n in [17, 65, 257] {
            let g = Grid2D::new(n).unwrap();
            let one = ScalarField::constant(g, 1.0);
            let norm = one.l2_norm();
            assert!((norm - 2.0).abs() <= 4.0 / n as f64, "n = {n}: {norm}");
            assert!((one.l2_inner(&one).unwrap() - norm * norm).abs() < 1e-12);
            assert_eq!(ScalarField::zeros(g).l2_norm(), 0.0);
            let half = ScalarField::from_fn(g, |x1, _| if x1 < 0.0 { 1.0 } else { 0.0 });
            assert!((half.l2_norm() - 2f64.sqrt()).abs() < 4.0 / n as f64);
        }
    }

    #[test]
    fn mismatched_grids_are_reported() {
        let a = ScalarField::zeros(Grid2D::new(5).unwrap());
        let b = ScalarField::zeros(Grid2D::new(6).unwrap());
        assert!(matches!(a.l2_inner(&b), Err(Error::GridMismatch(_))));
        assert!(ScalarField::new(Grid2D::new(5).unwrap(), vec![0.0; 24]).is_err());
    }
}
