//! Dense matrices and LU factorization with partial pivoting.

use crate::scalar::{Entry, Real};
use num_traits::{Float, Zero};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<E> {
    rows: usize,
    cols: usize,
    data: Vec<E>,
}

impl<E: Entry> DenseMatrix<E> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![E::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = E::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<E>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[E] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[E]) -> Vec<E> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut acc = E::zero();
                for (a, b) in self.row(i).iter().zip(x) {
                    acc += *a * *b;
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn lu(&self) -> Result<LuFactor<E>, SingularMatrix> {
        LuFactor::new(self.clone())
    }
}

impl<E> std::ops::Index<(usize, usize)> for DenseMatrix<E> {
    type Output = E;
    fn index(&self, (i, j): (usize, usize)) -> &E {
        &self.data[i * self.cols + j]
    }
}

impl<E> std::ops::IndexMut<(usize, usize)> for DenseMatrix<E> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut E {
        &mut self.data[i * self.cols + j]
    }
}

/// Raised when elimination meets a column with no usable pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("matrix is singular at elimination step {step}")]
pub struct SingularMatrix {
    /// Column (in original ordering) where the zero pivot appeared.
    pub step: usize,
}

/// In-place LU factors `P A = L U`, unit lower triangle stored below the diagonal.
#[derive(Debug, Clone)]
pub struct LuFactor<E> {
    lu: DenseMatrix<E>,
    perm: Vec<usize>,
}

impl<E: Entry> LuFactor<E> {
    pub fn new(mut a: DenseMatrix<E>) -> Result<Self, SingularMatrix> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().fold(E::Real::zero(), |m, v| m.max(v.modulus()));
        let tiny = scale * E::Real::epsilon() * E::Real::lit(n.max(1) as f64);
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].modulus();
            for i in k + 1..n {
                let m = a[(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best <= tiny || best.is_zero() {
                return Err(SingularMatrix { step: k });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(p * n + j, k * n + j);
                }
            }
            let pivot = a[(k, k)];
            let (head, tail) = a.data.split_at_mut((k + 1) * n);
            let prow = &head[k * n..(k + 1) * n];
            for i in 0..n - k - 1 {
                let row = &mut tail[i * n..(i + 1) * n];
                if row[k].is_zero() {
                    continue;
                }
                let f = row[k] / pivot;
                row[k] = f;
                for j in k + 1..n {
                    row[j] -= f * prow[j];
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[E]) -> Vec<E> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<E> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in 0..i {
                acc -= row[j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= row[j] * x[j];
            }
            x[i] = acc / row[i];
        }
        x
    }

    /// Solves `Aᵀ x = b` (plain transpose, no conjugation).
    pub fn solve_transpose(&self, b: &[E]) -> Vec<E> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // Uᵀ z = b
        let mut z = b.to_vec();
        for i in 0..n {
            z[i] /= self.lu[(i, i)];
            let zi = z[i];
            let row = self.lu.row(i);
            for j in i + 1..n {
                z[j] -= row[j] * zi;
            }
        }
        // Lᵀ w = z
        for i in (0..n).rev() {
            let wi = z[i];
            let row = self.lu.row(i);
            for j in 0..i {
                z[j] -= row[j] * wi;
            }
        }
        let mut x = vec![E::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// Solves for every column of `b` in place.
    pub fn solve_many(&self, cols: &mut [Vec<E>]) {
        for c in cols.iter_mut() {
            *c = self.solve(c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn solves_small_real_system() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]]);
        let lu = a.lu().unwrap();
        let x = lu.solve(&[5.0, 3.0, 6.0]);
        let back = a.mul_vec(&x);
        for (b, r) in back.iter().zip([5.0, 3.0, 6.0]) {
            assert!((b - r).abs() < 1e-12);
        }
        let y = lu.solve_transpose(&[1.0, 2.0, 3.0]);
        let back = a.transpose().mul_vec(&y);
        for (b, r) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((b - r).abs() < 1e-12);
        }
    }

    #[test]
    fn complex_system() {
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = DenseMatrix::from_rows(&[vec![one + j, -j], vec![-j, 2.0 * one]]);
        let lu = a.lu().unwrap();
        let b = vec![one, j];
        let x = lu.solve(&b);
        let r = a.mul_vec(&x);
        assert!((r[0] - b[0]).norm() < 1e-14 && (r[1] - b[1]).norm() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(a.lu().unwrap_err().step, 1);
    }

    #[test]
    fn works_in_single_precision() {
        let a = DenseMatrix::from_rows(&[vec![4.0f32, 1.0], vec![1.0, 3.0]]);
        let x = a.lu().unwrap().solve(&[1.0, 2.0]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-6 && (x[1] - 7.0 / 11.0).abs() < 1e-6);
    }
}
