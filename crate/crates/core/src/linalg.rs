//! Dense Cholesky factorization for symmetric positive definite systems.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{shape_err, Error, Result};

/// Lower-triangular factor `L` with `A = L Lᵀ`, stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factor a symmetric positive definite matrix. Only the lower triangle is read.
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return shape_err(format!("cholesky needs a square matrix, got {}x{}", n, a.ncols()));
        }
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let (row_i, row_j) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let dot: f64 = row_i.iter().zip(row_j).map(|(x, y)| x * y).sum();
                let v = a[[i, j]] - dot;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::Factorization { pivot: i, value: v });
                    }
                    l[i * n + i] = v.sqrt();
                } else {
                    l[i * n + j] = v / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The factor as a dense matrix.
    pub fn lower(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n, self.n), self.l.clone()).expect("square buffer")
    }

    /// `log |A| = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    /// Solve `A x = b` in place.
    pub fn solve_vec_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let dot: f64 = row.iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
            b[i] = (b[i] - dot) / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let xi = b[i];
            let row = &self.l[i * n..i * n + i];
            for (bk, lik) in b[..i].iter_mut().zip(row) {
                *bk -= lik * xi;
            }
        }
    }

    /// Solve `A X = B` one column at a time.
    pub fn solve(&self, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.n {
            return shape_err(format!("rhs has {} rows, system has {}", b.nrows(), self.n));
        }
        let mut out = Array2::zeros(b.raw_dim());
        let mut col = vec![0.0; self.n];
        for (src, mut dst) in b.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
            col.iter_mut().zip(src.iter()).for_each(|(c, s)| *c = *s);
            self.solve_vec_in_place(&mut col);
            dst.iter_mut().zip(&col).for_each(|(d, c)| *d = *c);
        }
        Ok(out)
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        if b.len() != self.n {
            return shape_err(format!("rhs has {} rows, system has {}", b.len(), self.n));
        }
        let mut x = b.to_vec();
        self.solve_vec_in_place(&mut x);
        Ok(Array1::from(x))
    }

    /// `A⁻¹` via `n` solves against the identity.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.n;
        let mut inv = Array2::zeros((n, n));
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_vec_in_place(&mut col);
            // A⁻¹ is symmetric, so writing the solution as a row is the same as a column.
            inv.row_mut(j).iter_mut().zip(&col).for_each(|(d, c)| *d = *c);
        }
        inv
    }
}
