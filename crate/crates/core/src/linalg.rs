//! Small dense row-major matrices and the Cholesky factorization.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{invalid_input, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid_input!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(invalid_input!("row {i} has {} entries, expected {cols}", r.len()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(invalid_input!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(invalid_input!(
                "vector of length {} does not match {} columns",
                v.len(),
                self.cols
            ));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `XᵀX`.
    pub fn gram(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..self.cols {
                let a = row[i];
                for j in i..self.cols {
                    out[(i, j)] += a * row[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }

    /// `Xᵀv`.
    pub fn transpose_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(invalid_input!(
                "vector of length {} does not match {} rows",
                v.len(),
                self.rows
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(r)) {
                *o += x * vr;
            }
        }
        Ok(out)
    }

    /// Keeps the columns listed in `order`, in that order.
    pub fn select_columns(&self, order: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, order.len(), |i, j| self[(i, order[j])])
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    lower: Matrix,
}

impl Cholesky {
    /// Factors a symmetric matrix, reading only its lower triangle.
    ///
    /// A pivot not exceeding `relative_threshold * max_i a_ii` is reported as
    /// [`Error::NotPositiveDefinite`] with its (zero-based) index.
    pub fn new(a: &Matrix, relative_threshold: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid_input!("{}x{} matrix is not square", a.rows, a.cols));
        }
        let n = a.rows;
        let scale = a.diagonal().into_iter().fold(0.0f64, f64::max);
        let threshold = relative_threshold * scale;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut pivot = a[(j, j)];
            for k in 0..j {
                pivot -= l[(j, k)] * l[(j, k)];
            }
            if !(pivot > threshold) {
                return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
            }
            let d = libm::sqrt(pivot);
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows
    }

    /// Solves `L y = b` in place.
    pub fn forward_substitute(&self, b: &mut [f64]) {
        let l = &self.lower;
        for i in 0..b.len() {
            let s = dot(&l.row(i)[..i], &b[..i]);
            b[i] = (b[i] - s) / l[(i, i)];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn back_substitute(&self, y: &mut [f64]) {
        let l = &self.lower;
        for i in (0..y.len()).rev() {
            let mut s = y[i];
            for k in i + 1..y.len() {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(invalid_input!(
                "right-hand side of length {} for a {}x{} system",
                b.len(),
                self.dim(),
                self.dim()
            ));
        }
        let mut x = b.to_vec();
        self.forward_substitute(&mut x);
        self.back_substitute(&mut x);
        Ok(x)
    }

    /// `L⁻¹`, by forward substitution on the identity columns.
    pub fn lower_inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            // Entries above the diagonal stay zero.
            for i in j..n {
                let mut s = e[i];
                for k in j..i {
                    s -= self.lower[(i, k)] * e[k];
                }
                e[i] = s / self.lower[(i, i)];
            }
            for i in j..n {
                inv[(i, j)] = e[i];
            }
        }
        inv
    }

    /// `A⁻¹ = L⁻ᵀ L⁻¹`.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let linv = self.lower_inverse();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                // (L⁻ᵀL⁻¹)_ij = Σ_k (L⁻¹)_ki (L⁻¹)_kj, nonzero only for k ≥ max(i, j).
                let mut s = 0.0;
                for k in i..n {
                    s += linv[(k, i)] * linv[(k, j)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// `L z`, the map that turns iid standard normals into draws with covariance `A`.
    pub fn lower_mul(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&self.lower.row(i)[..=i], &z[..=i]);
        }
    }
}
