//! Closed-form ridge projection onto the dictionary basis.
//!
//! For a basis `B` (d × k, column i is the embedding of substructure i) and a
//! latent vector `z`, the coefficients minimizing
//! `½‖z − B r‖² + (λ1/2)‖r‖²` are
//! `r = (BᵀB + λ1 I_k)⁻¹ Bᵀ z = Bᵀ (B Bᵀ + λ1 I_d)⁻¹ z`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::linalg::Cholesky;

pub const DEFAULT_MAGNIFIER: f64 = 100.0;

/// Projection coefficients of one latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub r: Array1<f64>,
    pub magnifier: f64,
}

impl Coefficients {
    pub fn new(r: Array1<f64>, magnifier: f64) -> Result<Self> {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection coefficients".into()));
        }
        Ok(Coefficients { r, magnifier })
    }

    pub fn magnified(&self) -> Array1<f64> {
        &self.r * self.magnifier
    }
}

fn check_lambda(lambda1: f64) -> Result<()> {
    if !(lambda1 >= 0.0 && lambda1.is_finite()) {
        return Err(Error::invalid(format!("lambda1 must be a finite non-negative number, got {lambda1}")));
    }
    Ok(())
}

pub(crate) fn factor_with_advice(m: ArrayView2<f64>) -> Result<Cholesky> {
    Cholesky::factor(m).map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!(
            "{msg}; the basis is rank deficient, use a positive lambda1"
        )),
        other => other,
    })
}

fn gram_plus(g: Array2<f64>, lambda1: f64) -> Array2<f64> {
    let n = g.nrows();
    g + Array2::<f64>::eye(n) * lambda1
}

fn check_dims(z: ArrayView1<f64>, b: ArrayView2<f64>) -> Result<()> {
    if z.len() != b.nrows() {
        return Err(Error::shape(format!(
            "latent vector of length {} against a basis with {} rows",
            z.len(),
            b.nrows()
        )));
    }
    Ok(())
}

/// `(BᵀB + λ1 I_k)⁻¹ Bᵀ z`, solving a k × k system.
pub fn ridge_primal(z: ArrayView1<f64>, b: ArrayView2<f64>, lambda1: f64) -> Result<Array1<f64>> {
    check_lambda(lambda1)?;
    check_dims(z, b)?;
    let chol = factor_with_advice(gram_plus(b.t().dot(&b), lambda1).view())?;
    chol.solve_vec(b.t().dot(&z).view())
}

/// `Bᵀ (B Bᵀ + λ1 I_d)⁻¹ z`, solving a d × d system.
pub fn ridge_dual(z: ArrayView1<f64>, b: ArrayView2<f64>, lambda1: f64) -> Result<Array1<f64>> {
    check_lambda(lambda1)?;
    check_dims(z, b)?;
    let chol = factor_with_advice(gram_plus(b.dot(&b.t()), lambda1).view())?;
    Ok(b.t().dot(&chol.solve_vec(z)?))
}

/// Ridge coefficients through whichever of the two equivalent systems is
/// smaller. With `lambda1 = 0` this also picks the one that can be regular.
pub fn ridge_coefficients(z: ArrayView1<f64>, b: ArrayView2<f64>, lambda1: f64) -> Result<Coefficients> {
    let (d, k) = b.dim();
    let r = if k <= d {
        ridge_primal(z, b, lambda1)?
    } else {
        ridge_dual(z, b, lambda1)?
    };
    Coefficients::new(r, DEFAULT_MAGNIFIER)
}

/// Batched projection in row form: `z` is n × d, `bt` is k × d (row i is the
/// embedding of substructure i). Returns `R` (n × k) and `M⁻¹` where
/// `M = btᵀ bt + λ1 I_d`.
pub(crate) fn ridge_rows(
    z: ArrayView2<f64>,
    bt: ArrayView2<f64>,
    lambda1: f64,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    check_lambda(lambda1)?;
    if z.ncols() != bt.ncols() {
        return Err(Error::shape("latent batch and basis disagree on d"));
    }
    let m = gram_plus(bt.t().dot(&bt), lambda1);
    let minv = factor_with_advice(m.view())?.inverse();
    let a = z.dot(&minv);
    let r = a.dot(&bt.t());
    Ok((r, a, minv))
}

/// Objective value `½‖z − B r‖² + (λ1/2)‖r‖²` for one sample.
pub fn ridge_objective(z: ArrayView1<f64>, b: ArrayView2<f64>, r: ArrayView1<f64>, lambda1: f64) -> f64 {
    let e = &z - &b.dot(&r);
    0.5 * e.dot(&e) + 0.5 * lambda1 * r.dot(&r)
}
