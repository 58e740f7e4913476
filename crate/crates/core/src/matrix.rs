//! Dense row-major real matrices and the small set of products the
//! training loop needs.
//!
//! Weight products are generic over the stored element so that the same
//! kernels serve both `f64` full-precision weights and `i8` quantized weights.
//! Quantized products accumulate in `f64`; for integer inputs the results are
//! exact as long as partial sums stay below 2^53.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major matrix of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FloatMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::validation(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite matrix entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the given rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// `x · w` where `w` is `rows(w) x w_cols` stored row-major.
pub(crate) fn matmul<T>(x: &FloatMatrix, w: &[T], w_rows: usize, w_cols: usize) -> Result<FloatMatrix>
where
    T: Copy + Into<f64> + Sync,
{
    if x.cols != w_rows {
        return Err(Error::validation(format!(
            "inner dimensions disagree: {}x{} times {}x{}",
            x.rows, x.cols, w_rows, w_cols
        )));
    }
    let mut out = FloatMatrix::zeros(x.rows, w_cols);
    if w_cols == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(w_cols)
        .zip(x.data.par_chunks(x.cols.max(1)))
        .for_each(|(acc, xrow)| {
            for (i, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wrow = &w[i * w_cols..(i + 1) * w_cols];
                for (a, &wv) in acc.iter_mut().zip(wrow) {
                    *a += xv * wv.into();
                }
            }
        });
    Ok(out)
}

/// `d · wᵀ` where `w` is `w_rows x w_cols` stored row-major and `d` has
/// `w_cols` columns.
pub(crate) fn matmul_transposed<T>(
    d: &FloatMatrix,
    w: &[T],
    w_rows: usize,
    w_cols: usize,
) -> Result<FloatMatrix>
where
    T: Copy + Into<f64> + Sync,
{
    if d.cols != w_cols {
        return Err(Error::validation(format!(
            "delta has {} columns but weight matrix has {} outputs",
            d.cols, w_cols
        )));
    }
    let mut out = FloatMatrix::zeros(d.rows, w_rows);
    if w_rows == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(w_rows)
        .zip(d.data.par_chunks(d.cols.max(1)))
        .for_each(|(acc, drow)| {
            for (i, a) in acc.iter_mut().enumerate() {
                let wrow = &w[i * w_cols..(i + 1) * w_cols];
                *a = drow.iter().zip(wrow).map(|(&dv, &wv)| dv * wv.into()).sum();
            }
        });
    Ok(out)
}

/// `xᵀ · d`, shape `cols(x) x cols(d)`.
pub(crate) fn transpose_matmul(x: &FloatMatrix, d: &FloatMatrix) -> Result<FloatMatrix> {
    if x.rows != d.rows {
        return Err(Error::validation(format!(
            "batch sizes disagree: {} vs {}",
            x.rows, d.rows
        )));
    }
    let (n_in, n_out) = (x.cols, d.cols);
    let mut out = FloatMatrix::zeros(n_in, n_out);
    for b in 0..x.rows {
        let drow = d.row(b);
        for (i, &xv) in x.row(b).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let acc = &mut out.data[i * n_out..(i + 1) * n_out];
            for (a, &dv) in acc.iter_mut().zip(drow) {
                *a += xv * dv;
            }
        }
    }
    Ok(out)
}
