use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{join, Parameterized};
use crate::error::{Error, Result};

/// Affine map `y = x Wᵀ + b` applied to each row of a batch.
///
/// `weight` is `out × in`. The gradient of a layer has the same shape as the
/// layer, so gradients are stored as `Dense` too.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Weights uniform in ±sqrt(6 / (in + out)), biases zero.
    pub fn glorot<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((output, input), || rng.gen_range(-limit..=limit));
        Dense {
            weight,
            bias: Array1::zeros(output),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {}",
                self.in_dim(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Output for the identity batch `I_in`: row `i` is column `i` of W plus b.
    pub fn forward_identity(&self) -> Array2<f64> {
        self.weight.t().as_standard_layout().into_owned() + &self.bias
    }

    /// Returns `(dL/dx, dL/dparams)` given `dL/dy`. `dL/dx` is skipped when
    /// `input_grad` is false.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        upstream: ArrayView2<f64>,
        input_grad: bool,
    ) -> Result<(Option<Array2<f64>>, Dense)> {
        if x.nrows() != upstream.nrows() || upstream.ncols() != self.out_dim() || x.ncols() != self.in_dim() {
            return Err(Error::shape(format!(
                "dense backward: input {:?}, upstream {:?}, layer {}x{}",
                x.dim(),
                upstream.dim(),
                self.out_dim(),
                self.in_dim()
            )));
        }
        let grad = Dense {
            weight: upstream.t().dot(&x),
            bias: upstream.sum_axis(Axis(0)),
        };
        let dx = input_grad.then(|| upstream.dot(&self.weight));
        Ok((dx, grad))
    }

    /// Parameter gradient when the input was the identity batch.
    pub fn backward_identity(&self, upstream: ArrayView2<f64>) -> Result<Dense> {
        if upstream.dim() != (self.in_dim(), self.out_dim()) {
            return Err(Error::shape("dense identity backward: upstream shape"));
        }
        Ok(Dense {
            weight: upstream.t().as_standard_layout().into_owned(),
            bias: upstream.sum_axis(Axis(0)),
        })
    }

    pub fn add_assign(&mut self, other: &Dense) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub fn zeros_like(&self) -> Dense {
        Dense::zeros(self.in_dim(), self.out_dim())
    }
}

impl Parameterized for Dense {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        f(&join(prefix, "weight"), self.weight.as_slice().expect("standard layout"));
        f(&join(prefix, "bias"), self.bias.as_slice().expect("standard layout"));
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "weight"), self.weight.as_slice_mut().expect("standard layout"));
        f(&join(prefix, "bias"), self.bias.as_slice_mut().expect("standard layout"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use ndarray::array;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut layer = Dense::zeros(3, 3);
        layer.weight = Array2::eye(3);
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(layer.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let mut layer = Dense::zeros(2, 3);
        layer.bias = array![1.0, 2.0, 3.0];
        let y = layer.forward(array![[5.0, 6.0], [-1.0, 0.5]].view()).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn shape_mismatch() {
        let layer = Dense::zeros(2, 3);
        assert!(layer.forward(Array2::zeros((1, 3)).view()).is_err());
        assert!(layer.backward(Array2::zeros((1, 2)).view(), Array2::zeros((2, 3)).view(), true).is_err());
    }

    #[test]
    fn identity_shortcut_matches_full_forward() {
        let mut rng = stream(3, Stream::Test);
        let mut layer = Dense::glorot(5, 4, &mut rng);
        layer.bias = array![0.1, -0.2, 0.3, 0.0];
        let full = layer.forward(Array2::eye(5).view()).unwrap();
        assert_eq!(layer.forward_identity(), full);
        let up = Array2::from_shape_fn((5, 4), |(i, j)| (i * 4 + j) as f64 * 0.1);
        let (_, g) = layer.backward(Array2::eye(5).view(), up.view(), false).unwrap();
        assert_eq!(layer.backward_identity(up.view()).unwrap(), g);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = stream(1, Stream::Test);
        let layer = Dense::glorot(10, 20, &mut rng);
        let limit = (6.0f64 / 30.0).sqrt();
        assert!(layer.weight.iter().all(|w| w.abs() <= limit));
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }

    /// Central differences on a random 4x3 layer under L = Σ c ⊙ y.
    #[test]
    fn backward_matches_finite_differences() {
        use rand::Rng;
        let mut rng = stream(7, Stream::Test);
        let mut layer = Dense::glorot(3, 4, &mut rng);
        layer.bias.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        let x = Array2::from_shape_simple_fn((5, 3), || rng.gen_range(-1.0..1.0));
        let c = Array2::from_shape_simple_fn((5, 4), || rng.gen_range(-1.0..1.0));
        let loss = |l: &Dense, x: &Array2<f64>| (l.forward(x.view()).unwrap() * &c).sum();
        let (dx, g) = layer.backward(x.view(), c.view(), true).unwrap();
        let dx = dx.unwrap();
        let h = 1e-3;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
        for idx in 0..layer.weight.len() {
            let (i, j) = (idx / 3, idx % 3);
            let mut p = layer.clone();
            p.weight[[i, j]] += h;
            let mut m = layer.clone();
            m.weight[[i, j]] -= h;
            let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel(g.weight[[i, j]], num) < 1e-4);
        }
        for i in 0..4 {
            let mut p = layer.clone();
            p.bias[i] += h;
            let mut m = layer.clone();
            m.bias[i] -= h;
            let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
            assert!(rel(g.bias[i], num) < 1e-4);
        }
        for r in 0..5 {
            for col in 0..3 {
                let mut xp = x.clone();
                xp[[r, col]] += h;
                let mut xm = x.clone();
                xm[[r, col]] -= h;
                let num = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h);
                assert!(rel(dx[[r, col]], num) < 1e-4);
            }
        }
    }
}
