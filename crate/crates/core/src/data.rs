//! Dataset containers: real-valued sample matrices and bit matrices.
//!
//! One row per record; the privacy unit is a single row.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid_input, Result};

/// An n x d table of real-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: DMatrix<f64>,
}

impl SampleMatrix {
    /// Builds a matrix from row vectors; all rows must share a dimension
    /// and every entry must be finite.
    pub fn from_rows(rows: &[DVector<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid_input("sample matrix must have at least one row"));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(invalid_input("sample rows must have dimension >= 1"));
        }
        let mut m = DMatrix::zeros(rows.len(), dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(invalid_input(format!(
                    "row {} has dimension {}, expected {}",
                    i,
                    row.len(),
                    dim
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(invalid_input(format!("non-finite entry at row {i}, column {j}")));
                }
                m[(i, j)] = v;
            }
        }
        Ok(Self { rows: m })
    }

    /// Builds a matrix from a row-major buffer of `n * d` finite values.
    pub fn from_row_major(n: usize, d: usize, values: &[f64]) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid_input("sample matrix must be at least 1 x 1"));
        }
        if values.len() != n * d {
            return Err(invalid_input(format!(
                "expected {} values for a {} x {} matrix, got {}",
                n * d,
                n,
                d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid_input(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            rows: DMatrix::from_row_iterator(n, d, values.iter().copied()),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Owned copy of row `i`.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.rows.row(i).transpose()
    }

    /// A new matrix holding rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_rows() {
            return Err(invalid_input(format!(
                "row range {}..{} out of bounds for {} rows",
                start,
                end,
                self.n_rows()
            )));
        }
        Ok(Self {
            rows: self.rows.rows(start, end - start).into_owned(),
        })
    }

    /// Applies `f` to every row.
    pub fn map_rows(&self, mut f: impl FnMut(DVector<f64>) -> DVector<f64>) -> Result<Self> {
        let mapped: Vec<DVector<f64>> = (0..self.n_rows()).map(|i| f(self.row(i))).collect();
        Self::from_rows(&mapped)
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// Mean of all rows.
    pub fn row_mean(&self) -> DVector<f64> {
        let n = self.n_rows() as f64;
        let mut acc = DVector::zeros(self.dim());
        for i in 0..self.n_rows() {
            acc += self.row(i);
        }
        acc / n
    }
}

/// An n x d table of bits, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    bits: Vec<u8>,
    n_rows: usize,
    dim: usize,
}

impl BitMatrix {
    /// Builds a bit matrix from a row-major buffer; entries must be 0 or 1.
    pub fn from_row_major(n: usize, d: usize, values: &[u8]) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid_input("bit matrix must be at least 1 x 1"));
        }
        if values.len() != n * d {
            return Err(invalid_input(format!(
                "expected {} bits for a {} x {} matrix, got {}",
                n * d,
                n,
                d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|&b| b > 1) {
            return Err(invalid_input(format!(
                "entry at row {}, column {} is not a bit",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            bits: values.to_vec(),
            n_rows: n,
            dim: d,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.dim + col]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.bits[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-column fraction of ones.
    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0u64; self.dim];
        for i in 0..self.n_rows {
            let row = self.row(i);
            for (j, &b) in row.iter().enumerate() {
                sums[j] += u64::from(b);
            }
        }
        sums.iter().map(|&s| s as f64 / self.n_rows as f64).collect()
    }

    /// A new matrix holding rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_rows {
            return Err(invalid_input(format!(
                "row range {}..{} out of bounds for {} rows",
                start, end, self.n_rows
            )));
        }
        Ok(Self {
            bits: self.bits[start * self.dim..end * self.dim].to_vec(),
            n_rows: end - start,
            dim: self.dim,
        })
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }
}
