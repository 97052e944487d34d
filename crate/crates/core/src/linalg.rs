//! Minimal dense row-major matrix. SVD is delegated to nalgebra.

#[allow(unused_imports)] // inherent methods when std is linked
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self.transpose().matmul(self);
        let mut worst = 0.0f64;
        for r in 0..g.rows {
            for c in 0..g.cols {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((g.get(r, c) - target).abs());
            }
        }
        worst
    }

    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<f64>) -> Matrix {
        let mut out = Matrix::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.data[r * m.ncols() + c] = m[(r, c)];
            }
        }
        out
    }

    /// Orthogonal polar factor `U·Vᵀ` of this square matrix, from its SVD.
    pub fn polar_orthogonal(&self) -> Matrix {
        assert_eq!(self.rows, self.cols);
        let svd = self.to_nalgebra().svd(true, true);
        let u = svd.u.expect("svd u");
        let vt = svd.v_t.expect("svd vt");
        Matrix::from_nalgebra(&(u * vt))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `v · M` for a row vector `v`.
pub fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    assert_eq!(v.len(), m.rows);
    let mut out = vec![0.0; m.cols];
    for (k, &a) in v.iter().enumerate() {
        for (o, &b) in out.iter_mut().zip(m.row(k)) {
            *o += a * b;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_factor_of_rotation_is_itself() {
        let (s, c) = (0.6f64, 0.8f64);
        let r = Matrix::from_rows(2, 2, vec![c, -s, s, c]);
        let p = r.polar_orthogonal();
        assert!(p.frobenius_distance(&r) < 1e-12);
        assert!(p.orthogonality_error() < 1e-12);
    }

    #[test]
    fn matmul_identity() {
        let m = Matrix::from_rows(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(m.matmul(&Matrix::identity(3)), m);
        assert_eq!(m.transpose().transpose(), m);
    }
}
