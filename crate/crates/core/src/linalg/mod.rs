//! Compressed sparse row matrices and the linear solvers used by the state,
//! adjoint, Lamé and deformation systems.

mod cg;
mod lu;

use std::fmt::Write as _;

use thiserror::Error;

pub use cg::{conjugate_gradient, CgOutcome};
pub use lu::{reverse_cuthill_mckee, BandLu};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("matrix is singular to working precision (zero pivot in column {0})")]
    Singular(usize),
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
}

/// Relative residual accepted by [`solve`].
pub const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed in the
    /// order they appear, so the result is a deterministic function of the
    /// triplet sequence.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(r, c, _) in triplets {
            if r >= n_rows {
                return Err(LinalgError::IndexOutOfRange { index: r, dim: n_rows });
            }
            if c >= n_cols {
                return Err(LinalgError::IndexOutOfRange { index: c, dim: n_cols });
            }
            counts[r + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        // bucket by row, keeping input order within a row
        let mut next = counts.clone();
        let mut by_row = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            by_row[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..n_rows {
            let row = &mut by_row[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut t = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &t).expect("indices are in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.n_cols {
            return Err(LinalgError::Dimension { expected: self.n_cols, found: x.len() });
        }
        Ok((0..self.n_rows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect())
    }

    /// `A^T x` without forming the transpose.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.n_rows {
            return Err(LinalgError::Dimension { expected: self.n_rows, found: x.len() });
        }
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        Self { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr: counts, col_idx, values }
    }

    /// Principal submatrix on `keep x keep`, in the order given.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self, LinalgError> {
        let dim = self.n_rows.min(self.n_cols);
        let mut position = vec![usize::MAX; self.n_cols];
        for (k, &i) in keep.iter().enumerate() {
            if i >= dim {
                return Err(LinalgError::IndexOutOfRange { index: i, dim });
            }
            position[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in keep.iter().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if position[j] != usize::MAX {
                    t.push((k, position[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &t)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &Self, alpha: f64) -> Result<Self, LinalgError> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(LinalgError::Dimension { expected: self.n_rows, found: other.n_rows });
        }
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
            let (cols, vals) = other.row(i);
            t.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, alpha * v)));
        }
        Self::from_triplets(self.n_rows, self.n_cols, &t)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { values: self.values.iter().map(|v| alpha * v).collect(), ..self.clone() }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_abs_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v.abs()).sum()
    }

    /// Largest row absolute sum (the induced infinity norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows).map(|i| self.row_abs_sum(i)).fold(0.0, f64::max)
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        self.add_scaled(&t, -1.0).map_or(f64::INFINITY, |d| {
            d.values.iter().fold(0.0, |m, v| m.max(v.abs()))
        })
    }

    /// Matrix Market coordinate format.
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.n_rows, self.n_cols, self.nnz());
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
        s
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn relative_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<f64, LinalgError> {
    residual_of(&a.mul_vec(x)?, b)
}

fn residual_of(ax: &[f64], b: &[f64]) -> Result<f64, LinalgError> {
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm2(b);
    Ok(if nb == 0.0 { norm2(&r) } else { norm2(&r) / nb })
}

/// Solve `A x = b`. Symmetric positive definite systems use Jacobi
/// preconditioned CG (falling back to LU if it stalls); all others use a
/// banded LU factorization with partial pivoting.
pub fn solve(a: &SparseMatrix, b: &[f64], symmetric: bool) -> Result<Vec<f64>, LinalgError> {
    if a.n_rows != a.n_cols {
        return Err(LinalgError::Dimension { expected: a.n_rows, found: a.n_cols });
    }
    if b.len() != a.n_rows {
        return Err(LinalgError::Dimension { expected: a.n_rows, found: b.len() });
    }
    if symmetric {
        if let Ok(out) = conjugate_gradient(a, b, 1e-12, 20 * a.n_rows + 100) {
            let res = relative_residual(a, &out.x, b)?;
            if res <= SOLVE_TOLERANCE {
                return Ok(out.x);
            }
        }
    }
    let lu = BandLu::factor(a)?;
    let x = lu.solve(b)?;
    check_residual(a, &x, b)?;
    Ok(x)
}

/// Fail unless `|A x - b| <= SOLVE_TOLERANCE |b|`.
pub fn check_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<(), LinalgError> {
    accept(relative_residual(a, x, b)?)
}

/// Same as [`check_residual`] for `A^T x = b`.
pub fn check_transpose_residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<(), LinalgError> {
    accept(residual_of(&a.transpose_mul_vec(x)?, b)?)
}

fn accept(residual: f64) -> Result<(), LinalgError> {
    if residual > SOLVE_TOLERANCE || !residual.is_finite() {
        return Err(LinalgError::Residual { residual, tolerance: SOLVE_TOLERANCE });
    }
    Ok(())
}
