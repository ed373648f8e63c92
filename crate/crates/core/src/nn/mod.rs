//! Small differentiable building blocks with hand-written backward passes.
//!
//! Everything runs in `f64` on row-major `ndarray` matrices with one sample
//! per row.

mod adam;
mod batchnorm;
mod dense;
mod gradcheck;
pub mod linalg;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm1d, BatchNormCache, BatchNormGrad, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use dense::Dense;
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use mlp::{Mlp, MlpCache, MlpGrad, MlpInput, NormMode};

use ndarray::{Array2, ArrayView2, Zip};

/// A fixed, ordered collection of named parameter tensors.
///
/// Gradient containers implement this with the same names and order as the
/// parameters they belong to, which is what the optimizer and the gradient
/// checker rely on.
pub trait Parameterized {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, s| n += s.len());
        n
    }

    /// All parameters concatenated in visit order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit("", &mut |_, s| out.extend_from_slice(s));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zero the upstream gradient wherever the ReLU input was not positive.
pub fn relu_backward(pre: ArrayView2<f64>, upstream: &mut Array2<f64>) {
    Zip::from(upstream).and(pre).for_each(|g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
}
