//! Dense symmetric positive definite solves.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    /// Factor a symmetric matrix. Fails with [`Error::Singular`] when a pivot
    /// is not clearly positive relative to the largest diagonal entry.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::shape(format!("cholesky of a non-square {:?} matrix", a.dim())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix to factor has non-finite entries".into()));
        }
        let max_diag = a.diag().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let tol = n as f64 * f64::EPSILON * max_diag.max(f64::MIN_POSITIVE);
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for p in 0..j {
                d -= l[[j, p]] * l[[j, p]];
            }
            if d <= tol {
                return Err(Error::Singular(format!(
                    "matrix is singular or not positive definite (pivot {j} is {d:e})"
                )));
            }
            let djj = d.sqrt();
            l[[j, j]] = djj;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for p in 0..j {
                    s -= l[[i, p]] * l[[j, p]];
                }
                l[[i, j]] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_l(&self) -> &Array2<f64> {
        &self.l
    }

    /// Solve `A x = b`.
    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Result<Array1<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::shape(format!("right-hand side of length {} for a {n}x{n} system", b.len())));
        }
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for p in 0..i {
                s -= self.l[[i, p]] * y[p];
            }
            y[i] = s / self.l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in i + 1..n {
                s -= self.l[[p, i]] * y[p];
            }
            y[i] = s / self.l[[i, i]];
        }
        Ok(y)
    }

    /// Solve `A X = B` column by column.
    pub fn solve(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(Error::shape(format!("{} rows on the right for a {n}x{n} system", b.nrows())));
        }
        let mut out = Array2::zeros(b.dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.solve_vec(col)?);
        }
        Ok(out)
    }

    /// `B A⁻¹` for a batch of row vectors `B`.
    pub fn solve_rows(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let n = self.dim();
        if b.ncols() != n {
            return Err(Error::shape(format!("{} columns for a {n}x{n} system", b.ncols())));
        }
        let mut out = Array2::zeros(b.dim());
        for (i, row) in b.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.solve_vec(row)?);
        }
        Ok(out)
    }

    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        self.solve(Array2::<f64>::eye(n).view()).expect("square identity")
    }
}
