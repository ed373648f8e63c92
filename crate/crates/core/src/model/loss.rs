use ndarray::{ArrayView2, Zip};

use crate::error::{Error, Result};

/// Probabilities are kept this far from 0 and 1 inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Cross-entropy of a logit, computed without forming the probability. Equal
/// to the clamped form away from the boundary, and its derivative in `s` is
/// exactly `σ(s) - y` everywhere, so saturated rows keep their gradient.
fn bce_logit(s: f64, y: f64) -> f64 {
    s.max(0.0) - s * y + (-s.abs()).exp().ln_1p()
}

/// Logit form of [`reconstruction_loss`], used by the training objective.
pub(crate) fn reconstruction_from_logits(x: ArrayView2<f64>, logits: ArrayView2<f64>) -> f64 {
    let mut sum = 0.0;
    Zip::from(x).and(logits).for_each(|&y, &s| sum += bce_logit(s, y));
    sum / x.nrows() as f64
}

/// Logit form of [`classification_loss`], used by the training objective.
pub(crate) fn classification_from_logits(logits: &[f64], y: &[bool]) -> f64 {
    let sum: f64 = logits.iter().zip(y).map(|(&s, &y)| bce_logit(s, f64::from(u8::from(y)))).sum();
    sum / logits.len() as f64
}

/// Per-term losses of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub projection: f64,
    /// Absent when the batch carried no labels.
    pub classification: Option<f64>,
    /// Weighted sum of the terms.
    pub total: f64,
}

impl LossBreakdown {
    pub fn check_finite(&self) -> Result<()> {
        if self.total.is_finite() {
            return Ok(());
        }
        Err(Error::NonFinite(format!(
            "loss diverged (reconstruction {}, projection {}, classification {:?})",
            self.reconstruction, self.projection, self.classification
        )))
    }
}

/// Binary cross-entropy summed over features and averaged over rows.
pub fn reconstruction_loss(x: ArrayView2<f64>, xhat: ArrayView2<f64>) -> Result<f64> {
    if x.dim() != xhat.dim() {
        return Err(Error::shape(format!("target {:?} vs reconstruction {:?}", x.dim(), xhat.dim())));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut sum = 0.0;
    Zip::from(x).and(xhat).for_each(|&y, &p| sum += bce(p, y));
    Ok(sum / x.nrows() as f64)
}

/// Binary cross-entropy averaged over the batch.
pub fn classification_loss(p: &[f64], y: &[bool]) -> Result<f64> {
    if p.len() != y.len() {
        return Err(Error::shape("probability and label counts differ"));
    }
    if p.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let sum: f64 = p.iter().zip(y).map(|(&p, &y)| bce(p, f64::from(u8::from(y)))).sum();
    Ok(sum / p.len() as f64)
}

/// `mean_n(½‖z − B r‖² + (λ1/2)‖r‖²) + λ2‖B‖_F²` with `z` and `r` as rows
/// (n × d and n × k) and `b` as d × k.
pub fn projection_loss(
    z: ArrayView2<f64>,
    b: ArrayView2<f64>,
    r: ArrayView2<f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let (d, k) = b.dim();
    if z.ncols() != d || r.ncols() != k || z.nrows() != r.nrows() {
        return Err(Error::shape(format!(
            "latent {:?}, basis {:?}, coefficients {:?}",
            z.dim(),
            b.dim(),
            r.dim()
        )));
    }
    if z.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let e = &z - &r.dot(&b.t());
    Ok(projection_rows(e.view(), r, b.t(), lambda1, lambda2))
}

/// Same as [`projection_loss`] given the residual rows and `Bᵀ`.
pub(crate) fn projection_rows(
    e: ArrayView2<f64>,
    r: ArrayView2<f64>,
    bt: ArrayView2<f64>,
    lambda1: f64,
    lambda2: f64,
) -> f64 {
    let n = e.nrows() as f64;
    let sq = |a: ArrayView2<f64>| a.iter().map(|v| v * v).sum::<f64>();
    (0.5 * sq(e) + 0.5 * lambda1 * sq(r)) / n + lambda2 * sq(bt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn logit_form_matches_probability_form() {
        let mut rng = stream(40, Stream::Test);
        let s = Array2::from_shape_simple_fn((4, 5), || rng.gen_range(-8.0..8.0));
        let x = Array2::from_shape_simple_fn((4, 5), || f64::from(u8::from(rng.gen_bool(0.5))));
        let p = s.mapv(crate::nn::sigmoid);
        let a = reconstruction_loss(x.view(), p.view()).unwrap();
        assert!((a - reconstruction_from_logits(x.view(), s.view())).abs() < 1e-10);
        let logits: Vec<f64> = s.column(0).to_vec();
        let y: Vec<bool> = x.column(0).iter().map(|&v| v > 0.5).collect();
        let probs: Vec<f64> = p.column(0).to_vec();
        let b = classification_loss(&probs, &y).unwrap();
        assert!((b - classification_from_logits(&logits, &y)).abs() < 1e-10);
        // far past the clamp the logit form keeps growing
        assert!(classification_from_logits(&[-60.0], &[true]) > 59.0);
    }

    #[test]
    fn uniform_reconstruction_costs_ln2_per_feature() {
        let x = Array2::from_shape_fn((3, 10), |(i, j)| ((i + j) % 2) as f64);
        let xhat = Array2::from_elem((3, 10), 0.5);
        let l = reconstruction_loss(x.view(), xhat.view()).unwrap();
        assert!((l - 10.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn near_perfect_fit_is_near_zero() {
        let x = array![[1.0, 0.0, 1.0]];
        let xhat = array![[1.0 - 1e-9, 1e-9, 1.0 - 1e-9]];
        assert!(reconstruction_loss(x.view(), xhat.view()).unwrap() < 1e-8);
        assert!(classification_loss(&[1.0 - 1e-9, 1e-9], &[true, false]).unwrap() < 1e-8);
    }

    #[test]
    fn boundaries_are_clamped() {
        let l = reconstruction_loss(array![[1.0, 0.0]].view(), array![[0.0, 1.0]].view()).unwrap();
        assert!(l.is_finite());
        assert!((l + 2.0 * PROB_CLAMP.ln()).abs() < 1e-3);
        assert!(classification_loss(&[0.0], &[true]).unwrap().is_finite());
    }

    #[test]
    fn matches_scalar_oracle() {
        let mut rng = stream(21, Stream::Test);
        let x = Array2::from_shape_simple_fn((4, 6), || f64::from(u8::from(rng.gen_bool(0.5))));
        let xhat = Array2::from_shape_simple_fn((4, 6), || rng.gen_range(0.01..0.99));
        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..6 {
                let (y, p): (f64, f64) = (x[[i, j]], xhat[[i, j]]);
                oracle += if y == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
            }
        }
        let got = reconstruction_loss(x.view(), xhat.view()).unwrap();
        assert!((got - oracle / 4.0).abs() < 1e-12);

        let p: Vec<f64> = (0..9).map(|_| rng.gen_range(0.01..0.99)).collect();
        let y: Vec<bool> = (0..9).map(|_| rng.gen_bool(0.5)).collect();
        let oracle: f64 = p
            .iter()
            .zip(&y)
            .map(|(p, y)| if *y { -p.ln() } else { -(1.0 - p).ln() })
            .sum::<f64>()
            / 9.0;
        assert!((classification_loss(&p, &y).unwrap() - oracle).abs() < 1e-12);
        assert!((classification_loss(&[0.5], &[false]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn projection_with_zero_basis() {
        let z = array![[1.0, 2.0]];
        let b = Array2::zeros((2, 3));
        let r = array![[0.5, -1.0, 2.0]];
        let l = projection_loss(z.view(), b.view(), r.view(), 0.1, 7.0).unwrap();
        assert!((l - (0.5 * 5.0 + 0.05 * 5.25)).abs() < 1e-14);
    }

    #[test]
    fn frobenius_term() {
        let b = array![[1.0, 2.0], [-3.0, 0.5]];
        let z = Array2::zeros((1, 2));
        let r = Array2::zeros((1, 2));
        let l = projection_loss(z.view(), b.view(), r.view(), 1.0, 0.3).unwrap();
        assert!((l - 0.3 * 14.25).abs() < 1e-14);
    }

    #[test]
    fn optimal_projection_matches_expansion() {
        // with B = I and r = z / (1 + λ): ½‖z − r‖² + λ/2‖r‖² = ½ λ/(1+λ) ‖z‖²
        let lambda = 0.25;
        let z = array![[1.0, -2.0, 3.0]];
        let r = &z / (1.0 + lambda);
        let b = Array2::<f64>::eye(3);
        let l = projection_loss(z.view(), b.view(), r.view(), lambda, 0.0).unwrap();
        let expected = 0.5 * lambda / (1.0 + lambda) * 14.0;
        assert!((l - expected).abs() < 1e-12);
    }
}
