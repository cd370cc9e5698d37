//! Dense matrices, just large enough for this crate.
//!
//! Every system we solve is tiny (Gram matrices of a handful of basis
//! densities, tall-skinny regression designs with at most a few columns), so
//! a flat row-major buffer with partial-pivot LU and Householder QR covers
//! all of it without pulling a linear algebra dependency into a no_std crate.

use crate::error::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

#[derive(Clone, Debug, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn<F: FnMut(usize, usize) -> f64>(rows: usize, cols: usize, mut f: F) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut m = Matrix::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "ragged rows");
            m.data[i * c..(i + 1) * c].copy_from_slice(row);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
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
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self[(i, j)] * x[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> f64 {
        let mut best = 0.0_f64;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                s += libm::fabs(self[(i, j)]);
            }
            best = best.max(s);
        }
        best
    }

    /// Solve self * X = B for square self via LU with partial pivoting.
    pub fn solve_mat(&self, b: &Matrix) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols, "solve requires a square matrix");
        assert_eq!(self.rows, b.rows, "right-hand side has wrong row count");
        let n = self.rows;
        let mut lu = self.clone();
        let mut x = b.clone();
        for k in 0..n {
            let mut p = k;
            let mut best = libm::fabs(lu[(k, k)]);
            for i in k + 1..n {
                let v = libm::fabs(lu[(i, k)]);
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-300 {
                return Err(Error::Singular("pivot vanished during elimination"));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                for j in 0..x.cols {
                    let t = x[(k, j)];
                    x[(k, j)] = x[(p, j)];
                    x[(p, j)] = t;
                }
            }
            let piv = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / piv;
                if f == 0.0 {
                    continue;
                }
                lu[(i, k)] = f;
                for j in k + 1..n {
                    lu[(i, j)] -= f * lu[(k, j)];
                }
                for j in 0..x.cols {
                    x[(i, j)] -= f * x[(k, j)];
                }
            }
        }
        for j in 0..x.cols {
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in i + 1..n {
                    s -= lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / lu[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = Matrix::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.solve_mat(&rhs)?;
        Ok(x.data)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        self.solve_mat(&Matrix::identity(self.rows))
    }

    /// 1-norm condition number via the explicit inverse. Every matrix here
    /// fits in a cache line, so the direct route is fine.
    pub fn cond_1(&self) -> Result<f64> {
        Ok(self.norm_1() * self.inverse()?.norm_1())
    }

    /// Least squares solve of self * X = B by Householder QR; self is n x k
    /// with n >= k. Returns the k x m coefficient matrix.
    pub fn lstsq(&self, b: &Matrix) -> Result<Matrix> {
        let (n, k) = (self.rows, self.cols);
        assert!(n >= k, "least squares needs at least as many rows as columns");
        assert_eq!(n, b.rows, "right-hand side has wrong row count");
        let mut r = self.clone();
        let mut y = b.clone();
        for j in 0..k {
            // Householder vector for column j below the diagonal.
            let mut norm = 0.0;
            for i in j..n {
                norm += r[(i, j)] * r[(i, j)];
            }
            let norm = libm::sqrt(norm);
            if norm < 1e-300 {
                return Err(Error::Singular("design matrix is rank deficient"));
            }
            let alpha = if r[(j, j)] >= 0.0 { -norm } else { norm };
            let mut v = vec![0.0; n - j];
            v[0] = r[(j, j)] - alpha;
            for i in j + 1..n {
                v[i - j] = r[(i, j)];
            }
            let vtv: f64 = v.iter().map(|x| x * x).sum();
            if vtv < 1e-300 {
                continue;
            }
            let apply = |mat: &mut Matrix, col: usize, v: &[f64]| {
                let mut dot = 0.0;
                for i in j..mat.rows {
                    dot += v[i - j] * mat[(i, col)];
                }
                let f = 2.0 * dot / vtv;
                for i in j..mat.rows {
                    mat[(i, col)] -= f * v[i - j];
                }
            };
            for col in j..k {
                apply(&mut r, col, &v);
            }
            for col in 0..y.cols {
                apply(&mut y, col, &v);
            }
        }
        // Back substitution on the upper triangle.
        let mut x = Matrix::zeros(k, y.cols);
        for col in 0..y.cols {
            for i in (0..k).rev() {
                let mut s = y[(i, col)];
                for l in i + 1..k {
                    s -= r[(i, l)] * x[(l, col)];
                }
                if libm::fabs(r[(i, i)]) < 1e-300 {
                    return Err(Error::Singular("zero diagonal in QR factor"));
                }
                x[(i, col)] = s / r[(i, i)];
            }
        }
        Ok(x)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_2x2() {
        let m = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 4.0 / 3.0]]);
        let inv = m.inverse().unwrap();
        let expect = Matrix::from_rows(&[&[4.0, -3.0], &[-3.0, 3.0]]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - expect[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solve_against_known_product() {
        let a = Matrix::from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 3.0, 1.0], &[0.0, 1.0, 4.0]]);
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let x = a.solve(&b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_rejected() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert!(matches!(m.inverse(), Err(Error::Singular(_))));
    }

    #[test]
    fn lstsq_recovers_exact_coefficients() {
        // Overdetermined but consistent system.
        let n = 40;
        let design = Matrix::from_fn(n, 3, |i, j| {
            let x = i as f64 / (n - 1) as f64;
            [1.0, x, x * x][j]
        });
        let coef = [0.3, -1.2, 2.5];
        let rhs = Matrix::from_fn(n, 1, |i, _| {
            let x = i as f64 / (n - 1) as f64;
            coef[0] + coef[1] * x + coef[2] * x * x
        });
        let sol = design.lstsq(&rhs).unwrap();
        for j in 0..3 {
            assert!((sol[(j, 0)] - coef[j]).abs() < 1e-11, "coef {j}");
        }
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        // Inconsistent system: compare against (A'A)^{-1} A'b.
        let a = Matrix::from_rows(&[
            &[1.0, 0.2],
            &[1.0, 1.1],
            &[1.0, 2.3],
            &[1.0, 2.9],
        ]);
        let b = Matrix::from_fn(4, 1, |i, _| [0.1, 0.9, 2.2, 3.4][i]);
        let at = a.transpose();
        let gram = at.matmul(&a);
        let rhs = at.matmul(&b);
        let direct = gram.solve_mat(&rhs).unwrap();
        let qr = a.lstsq(&b).unwrap();
        for j in 0..2 {
            assert!((direct[(j, 0)] - qr[(j, 0)]).abs() < 1e-12);
        }
    }

    #[test]
    fn condition_number_of_identity() {
        let m = Matrix::identity(5);
        assert!((m.cond_1().unwrap() - 1.0).abs() < 1e-15);
    }
}
