//! Compressed sparse row matrices and direct solves.
//!
//! Assembly, products and transposes are done here; factorization is
//! delegated to faer's sparse LU with partial pivoting.

use crate::error::{Error, Result};
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseRowMat, SymbolicSparseRowMat};
use faer::prelude::*;
use faer::Mat;
use std::sync::Once;

/// Linear map on nodal vectors in CSR form. Column indices within a row are
/// sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed in
    /// input order and exact zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == c {
                    sum += row[k].1;
                    k += 1;
                }
                if sum != 0.0 {
                    indices.push(c);
                    values.push(sum);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
            symmetric: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        let mut op = Self::from_triplets(d.len(), d.len(), &t);
        op.symmetric = true;
        op
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, &[])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    /// Whether symmetry has been claimed (and verified) for this operator.
    pub fn claims_symmetry(&self) -> bool {
        self.symmetric
    }

    /// Verifies `max |A - A^T| <= tol * max |A|` and records the claim.
    pub fn assert_symmetric(mut self, tol: f64) -> Result<Self> {
        let asym = self.max_asymmetry();
        let scale = self.max_abs();
        if !self.is_square() || asym > tol * scale {
            return Err(Error::InvalidSetting(format!(
                "operator claimed symmetric but max |A - A^T| = {asym:e} (max |A| = {scale:e})"
            )));
        }
        self.symmetric = true;
        Ok(self)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            t.extend(self.row(i).map(|(j, a)| (j, i, a)));
        }
        let mut out = Self::from_triplets(self.ncols, self.nrows, &t);
        out.symmetric = self.symmetric;
        out
    }

    /// Largest entry of `|A - A^T|`.
    pub fn max_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let mut worst = 0.0_f64;
        for i in 0..self.nrows {
            let mut a = self.row(i).peekable();
            let mut b = t.row(i).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (None, None) => break,
                    (Some((ja, va)), Some((jb, vb))) if ja == jb => {
                        worst = worst.max((va - vb).abs());
                        a.next();
                        b.next();
                    }
                    (Some((ja, va)), Some((jb, _))) if ja < jb => {
                        worst = worst.max(va.abs());
                        a.next();
                    }
                    (Some(_), Some((_, vb))) | (None, Some((_, vb))) => {
                        worst = worst.max(vb.abs());
                        b.next();
                    }
                    (Some((_, va)), None) => {
                        worst = worst.max(va.abs());
                        a.next();
                    }
                }
            }
        }
        worst
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &SparseOperator) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut cols: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..self.nrows {
            cols.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            for &j in &cols {
                if acc[j] != 0.0 {
                    indices.push(j);
                    values.push(acc[j]);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
            symmetric: false,
        }
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &SparseOperator, b: f64) -> Self {
        assert_eq!(
            (self.nrows, self.ncols),
            (other.nrows, other.ncols),
            "lincomb dimension mismatch"
        );
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            t.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// `diag(left) * self * diag(right)`; either side may be omitted.
    /// `diag(left) * self * diag(right)`; entries that become zero are dropped.
    pub fn scaled(&self, left: Option<&[f64]>, right: Option<&[f64]>) -> Self {
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        indptr.push(0);
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let mut v = self.values[k];
                if let Some(l) = left {
                    v *= l[i];
                }
                if let Some(r) = right {
                    v *= r[j];
                }
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
            symmetric: false,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.scaled(Some(&vec![s; self.nrows]), None)
    }

    /// Assembles `[[a, b], [c, d]]` from equally sized square blocks.
    pub fn block2x2(a: &Self, b: &Self, c: &Self, d: &Self) -> Self {
        let m = a.nrows;
        for blk in [a, b, c, d] {
            assert_eq!((blk.nrows, blk.ncols), (m, m), "block size mismatch");
        }
        let mut t = Vec::with_capacity(a.nnz() + b.nnz() + c.nnz() + d.nnz());
        for (blk, ro, co) in [(a, 0, 0), (b, 0, m), (c, m, 0), (d, m, m)] {
            for i in 0..m {
                t.extend(blk.row(i).map(|(j, v)| (i + ro, j + co, v)));
            }
        }
        Self::from_triplets(2 * m, 2 * m, &t)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    fn to_faer(&self) -> SparseRowMat<usize, f64> {
        let symbolic = SymbolicSparseRowMat::new_checked(
            self.nrows,
            self.ncols,
            self.indptr.clone(),
            None,
            self.indices.clone(),
        );
        SparseRowMat::new(symbolic, self.values.clone())
    }
}

/// Relative residual accepted without complaint.
pub const SOLVE_TOL: f64 = 1e-10;
/// Relative residual beyond which the system is treated as numerically singular.
const SINGULAR_TOL: f64 = 1e-6;
const REFINEMENT_STEPS: usize = 3;

static SEQUENTIAL: Once = Once::new();

/// LU factorization of a square sparse operator. Immutable after
/// construction; solves take `&self` and may run concurrently.
pub struct Factorization {
    matrix: SparseOperator,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl Factorization {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidSetting(format!(
                "cannot factor a {}x{} operator",
                a.nrows, a.ncols
            )));
        }
        if !a.all_finite() {
            return Err(Error::SingularSystem("matrix has non-finite entries".into()));
        }
        // bitwise reproducible solves
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        let lu = a.to_faer().sp_lu().map_err(|e| match e {
            LuError::SymbolicSingular { index } => {
                Error::SingularSystem(format!("structurally singular at pivot {index}"))
            }
            LuError::Generic(e) => Error::SingularSystem(format!("{e:?}")),
        })?;
        Ok(Self {
            matrix: a.clone(),
            lu,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `A x = b`, with a few steps of iterative refinement when the
    /// first residual exceeds [`SOLVE_TOL`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.dim(), "rhs dimension mismatch");
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        let mut x = self.raw_solve(b);
        let mut rel = f64::INFINITY;
        for step in 0..=REFINEMENT_STEPS {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem("zero pivot in LU".into()));
            }
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rel = norm(&r) / bnorm;
            if rel <= SOLVE_TOL || step == REFINEMENT_STEPS {
                break;
            }
            let dx = self.raw_solve(&r);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }
        if !(rel <= SINGULAR_TOL) {
            return Err(Error::SingularSystem(format!(
                "relative residual {rel:e} after refinement"
            )));
        }
        if rel > SOLVE_TOL {
            log::debug!("sparse solve: relative residual {rel:e} above {SOLVE_TOL:e}");
        }
        Ok(x)
    }
}

/// One-shot factor-and-solve.
pub fn sparse_solve(a: &SparseOperator, b: &[f64]) -> Result<Vec<f64>> {
    Factorization::new(a)?.solve(b)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
