use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix<T: Scalar = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
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

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(
                "DenseMatrix::from_vec",
                format!("{} elements for {rows}x{cols}", rows * cols),
                data.len(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended
    /// for literals in tests and fixtures.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows in DenseMatrix::from_rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
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

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(
                op,
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            ))
        }
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64() * v.as_f64()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(
            self.same_shape(other),
            "max_abs_diff on differently shaped matrices"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// `‖self − other‖_F / max(‖other‖_F, tiny)`.
    pub fn relative_frobenius_error(&self, reference: &Self) -> f64 {
        assert!(
            self.same_shape(reference),
            "relative error on differently shaped matrices"
        );
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| {
                let d = a.as_f64() - b.as_f64();
                d * d
            })
            .sum();
        diff.sqrt() / reference.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    /// Column-wise concatenation of equally tall blocks.
    pub fn hconcat(blocks: &[Self]) -> Result<Self> {
        let rows = blocks
            .first()
            .map(|b| b.rows)
            .ok_or_else(|| Error::Input("hconcat of zero blocks".into()))?;
        if let Some(bad) = blocks.iter().find(|b| b.rows != rows) {
            return Err(Error::dim("hconcat", format!("{rows} rows"), bad.rows));
        }
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            let dst = out.row_mut(i);
            for b in blocks {
                dst[offset..offset + b.cols].copy_from_slice(b.row(i));
                offset += b.cols;
            }
        }
        Ok(out)
    }

    /// Inverse of [`DenseMatrix::hconcat`] for `parts` blocks of equal width.
    pub fn hsplit(&self, parts: usize) -> Result<Vec<Self>> {
        if parts == 0 || !self.cols.is_multiple_of(parts) {
            return Err(Error::dim(
                "hsplit",
                format!("width divisible by {parts}"),
                self.cols,
            ));
        }
        let width = self.cols / parts;
        Ok((0..parts)
            .map(|p| Self::from_fn(self.rows, width, |i, j| self.get(i, p * width + j)))
            .collect())
    }
}

impl<T: Scalar> fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(16) {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        if self.rows > 16 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(DenseMatrix::<f32>::from_vec(2, 2, vec![1.0; 3]).is_err());
        let m = DenseMatrix::<f32>::from_vec(2, 3, (0..6).map(|v| v as f32).collect()).unwrap();
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn concat_then_split_recovers_blocks() {
        let a = DenseMatrix::<f32>::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = DenseMatrix::<f32>::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        let c = DenseMatrix::hconcat(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.row(0), &[1.0, 2.0, 5.0, 6.0]);
        assert_eq!(c.hsplit(2).unwrap(), vec![a, b]);
    }

    #[test]
    fn transpose_swaps_indices() {
        let a = DenseMatrix::<f64>::from_rows(&[[1.0, 2.0, 3.0]]);
        let t = a.transpose();
        assert_eq!(t.shape(), (3, 1));
        assert_eq!(t.get(2, 0), 3.0);
    }
}
