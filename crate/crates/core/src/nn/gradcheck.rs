use crate::error::{Error, Result};

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a − n| / max(|a|, |n|, 1e-4)` over all coordinates.
    pub max_relative_error: f64,
    /// Coordinate where the largest error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

const FLOOR: f64 = 1e-4;

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FLOOR)
}

/// Central-difference check of `analytic` against `loss` around `point`.
pub fn gradient_check<F>(mut loss: F, point: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if point.len() != analytic.len() {
        return Err(Error::shape(format!(
            "{} analytic entries for {} parameters",
            analytic.len(),
            point.len()
        )));
    }
    let mut x = point.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let up = loss(&x)?;
        x[i] = orig - h;
        let down = loss(&x)?;
        x[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFinite(format!("gradient coordinate {i} is not finite")));
        }
        let err = relative_error(analytic[i], numeric);
        if err > report.max_relative_error || i == 0 {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: i,
                analytic: analytic[i],
                numeric,
            };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> Result<f64> {
        Ok(x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum())
    }

    #[test]
    fn exact_gradient_passes() {
        let p = [0.3, -1.2, 2.0];
        let g: Vec<f64> = p.iter().enumerate().map(|(i, v)| 2.0 * (i + 1) as f64 * v).collect();
        let r = gradient_check(quad, &p, &g, 1e-5).unwrap();
        assert!(r.passes(1e-6), "{r:?}");
    }

    #[test]
    fn corrupted_gradient_fails() {
        let p = [0.3, -1.2, 2.0];
        let g = [0.6, -4.8, 12.5];
        let r = gradient_check(quad, &p, &g, 1e-5).unwrap();
        assert!(!r.passes(1e-4));
        assert_eq!(r.worst_index, 2);
    }

    #[test]
    fn non_finite_is_reported() {
        let r = gradient_check(|_| Ok(f64::NAN), &[1.0], &[0.0], 1e-5);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(gradient_check(quad, &[1.0], &[], 1e-5).is_err());
    }
}
