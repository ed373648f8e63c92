use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{join, Parameterized};
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization over the rows of a batch.
///
/// Training mode normalizes with the batch mean and biased variance and folds
/// them into the running statistics (the running variance uses the unbiased
/// estimate). Inference mode normalizes with the running statistics only.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    train: bool,
}

/// Gradients for `gamma` and `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// `(mean, unbiased variance)` of one batch, per feature.
pub(crate) type BatchStatistics = (Array1<f64>, Array1<f64>);

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        BatchNorm1d {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.features() {
            return Err(Error::shape(format!(
                "batch norm over {} features got {} columns",
                self.features(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Normalize with batch statistics. Returns the output, the cache for the
    /// backward pass, and the `(mean, unbiased variance)` to fold into the
    /// running statistics.
    pub(crate) fn forward_batch_stats(
        &self,
        x: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, BatchNormCache, BatchStatistics)> {
        self.check(x)?;
        let n = x.nrows();
        if n < 2 {
            return Err(Error::invalid("batch normalization in training mode needs at least 2 rows"));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
        let inv_std = var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        let unbiased = var * (n as f64 / (n - 1) as f64);
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                train: true,
            },
            (mean, unbiased),
        ))
    }

    pub(crate) fn update_running(&mut self, mean: &Array1<f64>, var: &Array1<f64>) {
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + mean * m;
        self.running_var = &self.running_var * (1.0 - m) + var * m;
    }

    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<(Array2<f64>, BatchNormCache)> {
        let (y, cache, (mean, var)) = self.forward_batch_stats(x)?;
        self.update_running(&mean, &var);
        Ok((y, cache))
    }

    pub fn forward_eval(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, BatchNormCache)> {
        self.check(x)?;
        let inv_std = self.running_var.mapv(|v| 1.0 / (v + self.epsilon).sqrt());
        let xhat = (&x - &self.running_mean) * &inv_std;
        let y = &xhat * &self.gamma + &self.beta;
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                train: false,
            },
        ))
    }

    pub fn backward(&self, cache: &BatchNormCache, upstream: ArrayView2<f64>) -> (Array2<f64>, BatchNormGrad) {
        let grad = BatchNormGrad {
            gamma: (&upstream * &cache.xhat).sum_axis(Axis(0)),
            beta: upstream.sum_axis(Axis(0)),
        };
        let dxhat = &upstream * &self.gamma;
        let dx = if cache.train {
            let n = upstream.nrows() as f64;
            let sum = dxhat.sum_axis(Axis(0));
            let dot = (&dxhat * &cache.xhat).sum_axis(Axis(0));
            let inner = dxhat * n - &sum - &cache.xhat * &dot;
            inner * &(&cache.inv_std / n)
        } else {
            dxhat * &cache.inv_std
        };
        (dx, grad)
    }
}

impl Parameterized for BatchNorm1d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "gamma"), self.gamma.as_slice().expect("contiguous"));
        f(&join(prefix, "beta"), self.beta.as_slice().expect("contiguous"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "gamma"), self.gamma.as_slice_mut().expect("contiguous"));
        f(&join(prefix, "beta"), self.beta.as_slice_mut().expect("contiguous"));
    }
}

impl BatchNormGrad {
    pub fn add_assign(&mut self, other: &BatchNormGrad) {
        self.gamma += &other.gamma;
        self.beta += &other.beta;
    }
}

impl Parameterized for BatchNormGrad {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "gamma"), self.gamma.as_slice().expect("contiguous"));
        f(&join(prefix, "beta"), self.beta.as_slice().expect("contiguous"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "gamma"), self.gamma.as_slice_mut().expect("contiguous"));
        f(&join(prefix, "beta"), self.beta.as_slice_mut().expect("contiguous"));
    }
}
