//! Small dense row-major matrix and the handful of kernels the models need.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Gathers the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Gathers the given columns, in order, into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * indices.len());
        for row in self.row_iter() {
            data.extend(indices.iter().map(|&c| row[c]));
        }
        Matrix {
            rows: self.rows,
            cols: indices.len(),
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out[r] = bias + input[r] · weights` for every row; weights are `[in × out]`.
///
/// Accumulation order is fixed (bias first, then inputs in index order), so a
/// one-row call and a batched call produce bit-identical rows.
pub fn affine(input: &Matrix, weights: &Matrix, bias: &[f64]) -> Matrix {
    debug_assert_eq!(input.cols, weights.rows);
    debug_assert_eq!(bias.len(), weights.cols);
    let n_out = weights.cols;
    let mut out = Matrix::zeros(input.rows, n_out);
    for (x, o) in input
        .data
        .chunks_exact(input.cols.max(1))
        .zip(out.data.chunks_exact_mut(n_out.max(1)))
    {
        o.copy_from_slice(bias);
        for (xi, w_row) in x.iter().zip(weights.data.chunks_exact(n_out)) {
            if *xi == 0.0 {
                continue;
            }
            for (oj, wij) in o.iter_mut().zip(w_row) {
                *oj += xi * wij;
            }
        }
    }
    out
}

/// Solves `a · x = b` for a square system by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `tol` relative to the
/// largest diagonal magnitude.
pub fn solve(a: &Matrix, b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = a.rows;
    assert_eq!(n, a.cols);
    assert_eq!(n, b.len());
    if n == 0 {
        return Some(Vec::new());
    }
    let mut m = a.data.clone();
    let mut rhs = b.to_vec();
    let scale = (0..n)
        .map(|i| m[i * n + i].abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);

    for k in 0..n {
        let (pivot_row, pivot_abs) =
            (k..n)
                .map(|r| (r, m[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > tol * scale) {
            return None;
        }
        if pivot_row != k {
            for c in 0..n {
                m.swap(k * n + c, pivot_row * n + c);
            }
            rhs.swap(k, pivot_row);
        }
        let pivot = m[k * n + k];
        for r in (k + 1)..n {
            let factor = m[r * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in k..n {
                m[r * n + c] -= factor * m[k * n + c];
            }
            rhs[r] -= factor * rhs[k];
        }
    }

    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let tail: f64 = ((k + 1)..n).map(|c| m[k * n + c] * x[c]).sum();
        x[k] = (rhs[k] - tail) / m[k * n + k];
    }
    Some(x)
}
