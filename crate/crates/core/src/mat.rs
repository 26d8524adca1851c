//! Minimal column-major matrix storage shared by the basis and regression
//! modules. Column-major layout keeps Householder updates and column
//! appends contiguous.

use crate::scalar::Scalar;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> ColMatrix<T> {
    /// All-zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds from an existing column-major buffer. `data.len()` must equal
    /// `rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "column-major buffer size");
        Self { rows, cols, data }
    }

    /// Builds from a row-major buffer, transposing into column-major order.
    pub fn from_row_major(rows: usize, cols: usize, data: &[T]) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer size");
        let mut out = Self::zeros(rows, cols);
        for c in 0..cols {
            let col = out.col_mut(c);
            for (r, slot) in col.iter_mut().enumerate() {
                *slot = data[r * cols + c];
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Immutable view of column `c`.
    pub fn col(&self, c: usize) -> &[T] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// Mutable view of column `c`.
    pub fn col_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// Two disjoint mutable columns, needed for in-place rotations.
    pub fn col_pair_mut(&mut self, a: usize, b: usize) -> (&mut [T], &mut [T]) {
        assert!(a < b, "columns must be distinct and ordered");
        let (lo, hi) = self.data.split_at_mut(b * self.rows);
        (
            &mut lo[a * self.rows..(a + 1) * self.rows],
            &mut hi[..self.rows],
        )
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[c * self.rows + r]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[c * self.rows + r] = v;
    }

    /// Appends a column copied from `col`.
    pub fn push_col(&mut self, col: &[T]) {
        assert_eq!(col.len(), self.rows, "appended column length");
        self.data.extend_from_slice(col);
        self.cols += 1;
    }

    /// `out[r] += sum_c coeffs[c] * A[r, c]`, accumulating columns in
    /// ascending order. The fixed order makes vectorised and per-state
    /// evaluation paths produce bit-identical sums.
    pub fn accumulate_weighted_columns(&self, coeffs: &[T], out: &mut [T]) {
        assert_eq!(coeffs.len(), self.cols, "coefficient length");
        assert_eq!(out.len(), self.rows, "output length");
        for (c, &w) in coeffs.iter().enumerate() {
            let col = self.col(c);
            for (o, &v) in out.iter_mut().zip(col.iter()) {
                *o += w * v;
            }
        }
    }

    /// Raw column-major buffer.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}
