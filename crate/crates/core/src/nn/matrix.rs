//! Dense row-major matrix. The single numeric container for weights,
//! activations, gradients, observations and logits.
//!
//! Shape mismatches in the low-level arithmetic are programmer errors and
//! panic via `assert!`; the operations exposed to callers (network forward,
//! losses, ...) validate shapes and return `Result` instead.

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// Build from row-major data; rejects length mismatches and non-finite
    /// entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Argument("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// A single column vector (n x 1).
    pub fn column(values: &[T]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn col_to_vec(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * rhs`, (m x k)(k x n) -> (m x n).
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dims");
        let (m, k, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let a_row = self.row(i);
            let c_row = &mut out.data[i * n..(i + 1) * n];
            for (p, &a_ip) in a_row.iter().enumerate().take(k) {
                let b_row = &rhs.data[p * n..(p + 1) * n];
                for (c, &b) in c_row.iter_mut().zip(b_row) {
                    *c += a_ip * b;
                }
            }
        }
        out
    }

    /// `self^T * rhs`, (k x m)^T (k x n) -> (m x n), without materialising
    /// the transpose.
    pub fn matmul_at(&self, rhs: &Self) -> Self {
        assert_eq!(self.rows, rhs.rows, "matmul_at inner dims");
        let (k, m, n) = (self.rows, self.cols, rhs.cols);
        let mut out = Self::zeros(m, n);
        for p in 0..k {
            let a_row = self.row(p);
            let b_row = &rhs.data[p * n..(p + 1) * n];
            for (i, &a_pi) in a_row.iter().enumerate().take(m) {
                let c_row = &mut out.data[i * n..(i + 1) * n];
                for (c, &b) in c_row.iter_mut().zip(b_row) {
                    *c += a_pi * b;
                }
            }
        }
        out
    }

    /// `self * rhs^T`, (m x k)(n x k)^T -> (m x n).
    pub fn matmul_bt(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.cols, "matmul_bt inner dims");
        let (m, k, n) = (self.rows, self.cols, rhs.rows);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let a_row = self.row(i);
            for j in 0..n {
                let b_row = &rhs.data[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (&a, &b) in a_row.iter().zip(b_row) {
                    acc += a * b;
                }
                out.data[i * n + j] = acc;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Self) -> Self {
        self.zip(rhs, |a, b| a * b)
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += rhs * factor`, used by optimizers and soft updates.
    pub fn add_assign_scaled(&mut self, rhs: &Self, factor: T) {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape");
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b * factor;
        }
    }

    /// Add a column vector (rows x 1) to every column.
    pub fn add_col_broadcast(&self, col: &Self) -> Self {
        assert_eq!(col.shape(), (self.rows, 1), "broadcast column shape");
        let mut out = self.clone();
        for i in 0..self.rows {
            let b = col.data[i];
            for v in &mut out.data[i * self.cols..(i + 1) * self.cols] {
                *v += b;
            }
        }
        out
    }

    /// Per-row sums as a (rows x 1) column.
    pub fn row_sums(&self) -> Self {
        let mut out = Self::zeros(self.rows, 1);
        for i in 0..self.rows {
            out.data[i] = self.row(i).iter().fold(T::zero(), |acc, &v| acc + v);
        }
        out
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Self]) -> Self {
        assert!(!parts.is_empty(), "vstack of nothing");
        let cols = parts[0].cols;
        assert!(parts.iter().all(|p| p.cols == cols), "vstack column counts");
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Self { rows, cols, data }
    }

    /// Copy of the row range `[r0, r1)`.
    pub fn row_block(&self, r0: usize, r1: usize) -> Self {
        assert!(r0 <= r1 && r1 <= self.rows, "row range");
        Self {
            rows: r1 - r0,
            cols: self.cols,
            data: self.data[r0 * self.cols..r1 * self.cols].to_vec(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize(self.data.len()).unwrap()
    }

    pub fn frob_norm_sq(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v * v)
    }

    pub fn max_abs_diff(&self, rhs: &Self) -> T {
        assert_eq!(self.shape(), rhs.shape(), "elementwise shape");
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}
