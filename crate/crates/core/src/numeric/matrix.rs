use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "Matrix::from_vec",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice yields a 0×0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Dimension {
                    context: "Matrix::from_rows",
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
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

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
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
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_inner("Matrix::matmul", self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows,
            self.cols,
            other.cols,
            Operand::normal(self),
            Operand::normal(other),
            &mut out,
            0.0,
        );
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        check_inner("Matrix::matmul_transposed", self.cols, other.cols)?;
        let mut out = Matrix::zeros(self.rows, other.rows);
        gemm(
            self.rows,
            self.cols,
            other.rows,
            Operand::normal(self),
            Operand::transposed(other),
            &mut out,
            0.0,
        );
        Ok(out)
    }

    /// `acc += selfᵀ · other`.
    pub fn transposed_matmul_into(&self, other: &Matrix, acc: &mut Matrix) -> Result<()> {
        check_inner("Matrix::transposed_matmul_into", self.rows, other.rows)?;
        if acc.rows != self.cols || acc.cols != other.cols {
            return Err(Error::Dimension {
                context: "Matrix::transposed_matmul_into (accumulator)",
                expected: self.cols * other.cols,
                actual: acc.rows * acc.cols,
            });
        }
        gemm(
            self.cols,
            self.rows,
            other.cols,
            Operand::transposed(self),
            Operand::normal(other),
            acc,
            1.0,
        );
        Ok(())
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hcat(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for part in parts {
            if part.rows != rows {
                return Err(Error::Dimension {
                    context: "Matrix::hcat",
                    expected: rows,
                    actual: part.rows,
                });
            }
        }
        for r in 0..rows {
            let mut offset = 0;
            let dst = out.row_mut(r);
            for part in parts {
                dst[offset..offset + part.cols].copy_from_slice(part.row(r));
                offset += part.cols;
            }
        }
        Ok(out)
    }

    /// Copies the column range `[start, start + width)` into a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }
}

fn check_inner(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

struct Operand<'a> {
    data: &'a [f64],
    row_stride: isize,
    col_stride: isize,
}

impl<'a> Operand<'a> {
    fn normal(m: &'a Matrix) -> Self {
        Operand {
            data: &m.data,
            row_stride: m.cols as isize,
            col_stride: 1,
        }
    }

    fn transposed(m: &'a Matrix) -> Self {
        Operand {
            data: &m.data,
            row_stride: 1,
            col_stride: m.cols as isize,
        }
    }
}

// out = a (m×k) · b (k×n) + beta · out
fn gemm(m: usize, k: usize, n: usize, a: Operand, b: Operand, out: &mut Matrix, beta: f64) {
    debug_assert_eq!(out.rows, m);
    debug_assert_eq!(out.cols, n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            out.data.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: the strides describe in-bounds row-major (or transposed) views of
    // slices whose lengths were checked against the operand shapes above, and
    // `out` is a distinct, exclusively borrowed buffer of m×n elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
