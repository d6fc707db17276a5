//! Minimal compressed-row complex matrices for the banded operators of the
//! engines. Only the products the integrators need are provided.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

#[derive(Debug, Clone)]
pub(crate) struct Csr {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl Csr {
    pub(crate) fn from_dense(m: &DMatrix<C64>) -> Self {
        assert!(m.is_square());
        let n = m.nrows();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, values }
    }

    #[cfg(test)]
    pub(crate) fn nnz(&self) -> usize {
        self.values.len()
    }

    /// out += s·A·x
    pub(crate) fn left_mul_acc(&self, x: &DMatrix<C64>, s: C64, out: &mut DMatrix<C64>) {
        let cols = x.ncols();
        for j in 0..cols {
            let xc = x.column(j);
            let mut oc = out.column_mut(j);
            for i in 0..self.n {
                let mut acc = C64::new(0.0, 0.0);
                for p in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[p] * xc[self.indices[p]];
                }
                oc[i] += s * acc;
            }
        }
    }

    /// out += s·x·A
    pub(crate) fn right_mul_acc(&self, x: &DMatrix<C64>, s: C64, out: &mut DMatrix<C64>) {
        let rows = x.nrows();
        for k in 0..self.n {
            for p in self.indptr[k]..self.indptr[k + 1] {
                let j = self.indices[p];
                let v = s * self.values[p];
                for i in 0..rows {
                    out[(i, j)] += v * x[(i, k)];
                }
            }
        }
    }

    pub(crate) fn left_mul(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.n, x.ncols());
        self.left_mul_acc(x, C64::new(1.0, 0.0), &mut out);
        out
    }

    pub(crate) fn mul_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.values[p] * x[self.indices[p]];
            }
            out[i] = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize, seed: u64) -> DMatrix<C64> {
        let mut s = seed;
        DMatrix::from_fn(n, n, |i, j| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (i + 2 * j) % 3 == 0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new((s >> 40) as f64 / 1e7 - 0.8, (s >> 20 & 0xfff) as f64 / 4096.0)
            }
        })
    }

    #[test]
    fn products_match_dense() {
        let a = sample(7, 1);
        let x = sample(7, 2);
        let csr = Csr::from_dense(&a);
        assert!(csr.nnz() < 49);
        assert!((csr.left_mul(&x) - &a * &x).norm() < 1e-12);
        let mut out = DMatrix::zeros(7, 7);
        csr.right_mul_acc(&x, C64::new(0.0, 2.0), &mut out);
        assert!((out - &x * &a * C64::new(0.0, 2.0)).norm() < 1e-12);
        let v = x.column(3).into_owned();
        assert!((csr.mul_vec(&v) - &a * &v).norm() < 1e-12);
    }
}
