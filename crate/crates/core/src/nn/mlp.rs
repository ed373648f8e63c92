use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::{join, relu, relu_backward, BatchNorm1d, BatchNormCache, BatchNormGrad, Dense, Parameterized};
use crate::error::{Error, Result};

/// Input to an [`Mlp`]: an explicit batch, or the `k × k` identity, which is
/// handled without materializing it.
#[derive(Debug, Clone, Copy)]
pub enum MlpInput<'a> {
    Batch(ArrayView2<'a, f64>),
    Identity(usize),
}

impl MlpInput<'_> {
    fn dims(&self) -> (usize, usize) {
        match self {
            MlpInput::Batch(x) => x.dim(),
            MlpInput::Identity(k) => (*k, *k),
        }
    }
}

/// Which statistics batch normalization uses in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Batch,
    Running,
}

/// Stack of affine layers. Every layer but the last is followed by optional
/// batch normalization and a ReLU; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub norms: Vec<Option<BatchNorm1d>>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input of each layer. `None` for layer 0 when the input was the identity.
    inputs: Vec<Option<Array2<f64>>>,
    /// Output of each hidden layer after normalization and before the ReLU.
    pre: Vec<Array2<f64>>,
    norm_caches: Vec<Option<BatchNormCache>>,
    batch_stats: Vec<Option<(Array1<f64>, Array1<f64>)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<Dense>,
    pub norms: Vec<Option<BatchNormGrad>>,
}

impl Mlp {
    /// `sizes` lists the input width, each hidden width and the output width.
    pub fn new<R: Rng>(sizes: &[usize], batch_norm: bool, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let layers: Vec<Dense> = sizes.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect();
        let hidden = layers.len() - 1;
        let norms = (0..layers.len())
            .map(|i| (batch_norm && i < hidden).then(|| BatchNorm1d::new(sizes[i + 1])))
            .collect();
        Ok(Mlp { layers, norms })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].in_dim()];
        s.extend(self.layers.iter().map(Dense::out_dim));
        s
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.norms.iter().any(Option::is_some)
    }

    pub fn set_norm_hyperparameters(&mut self, momentum: f64, epsilon: f64) {
        for bn in self.norms.iter_mut().flatten() {
            bn.momentum = momentum;
            bn.epsilon = epsilon;
        }
    }

    /// Forward pass without touching running statistics.
    pub fn forward(&self, input: MlpInput<'_>, mode: NormMode) -> Result<(Array2<f64>, MlpCache)> {
        let (_, cols) = input.dims();
        if cols != self.in_dim() {
            return Err(Error::shape(format!("network expects {} inputs, got {cols}", self.in_dim())));
        }
        let last = self.layers.len() - 1;
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            norm_caches: Vec::with_capacity(last),
            batch_stats: Vec::with_capacity(last),
        };
        let mut h = match input {
            MlpInput::Batch(x) => {
                cache.inputs.push(Some(x.to_owned()));
                self.layers[0].forward(x)?
            }
            MlpInput::Identity(_) => {
                cache.inputs.push(None);
                self.layers[0].forward_identity()
            }
        };
        for i in 0..last {
            let (z, nc, stats) = match (&self.norms[i], mode) {
                (Some(bn), NormMode::Batch) => {
                    let (y, c, s) = bn.forward_batch_stats(h.view())?;
                    (y, Some(c), Some(s))
                }
                (Some(bn), NormMode::Running) => {
                    let (y, c) = bn.forward_eval(h.view())?;
                    (y, Some(c), None)
                }
                (None, _) => (h, None, None),
            };
            let mut a = z.clone();
            relu(&mut a);
            cache.pre.push(z);
            cache.norm_caches.push(nc);
            cache.batch_stats.push(stats);
            h = self.layers[i + 1].forward(a.view())?;
            cache.inputs.push(Some(a));
        }
        Ok((h, cache))
    }

    /// Fold the batch statistics recorded in `cache` into the running ones.
    pub fn commit_statistics(&mut self, cache: &MlpCache) {
        for (bn, stats) in self.norms.iter_mut().zip(&cache.batch_stats) {
            if let (Some(bn), Some((mean, var))) = (bn, stats) {
                bn.update_running(mean, var);
            }
        }
    }

    pub fn forward_train(&mut self, input: MlpInput<'_>) -> Result<(Array2<f64>, MlpCache)> {
        let (y, cache) = self.forward(input, NormMode::Batch)?;
        self.commit_statistics(&cache);
        Ok((y, cache))
    }

    pub fn forward_eval(&self, input: MlpInput<'_>) -> Result<(Array2<f64>, MlpCache)> {
        self.forward(input, NormMode::Running)
    }

    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_eval(MlpInput::Batch(x))?.0)
    }

    /// Gradients given `dL/d output`. The input gradient is only computed when
    /// asked for and when the input was an explicit batch.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: ArrayView2<f64>,
        input_grad: bool,
    ) -> Result<(Option<Array2<f64>>, MlpGrad)> {
        let n = self.layers.len();
        let mut layer_grads: Vec<Option<Dense>> = vec![None; n];
        let mut norm_grads: Vec<Option<BatchNormGrad>> = vec![None; n];
        let mut g = upstream.to_owned();
        let mut dx = None;
        for i in (0..n).rev() {
            let need_input = i > 0 || input_grad;
            match &cache.inputs[i] {
                Some(x) => {
                    let (d, grad) = self.layers[i].backward(x.view(), g.view(), need_input)?;
                    layer_grads[i] = Some(grad);
                    match d {
                        Some(d) if i > 0 => g = d,
                        d => dx = d,
                    }
                }
                None => layer_grads[i] = Some(self.layers[i].backward_identity(g.view())?),
            }
            if i > 0 {
                relu_backward(cache.pre[i - 1].view(), &mut g);
                if let (Some(bn), Some(nc)) = (&self.norms[i - 1], &cache.norm_caches[i - 1]) {
                    let (d, grad) = bn.backward(nc, g.view());
                    norm_grads[i - 1] = Some(grad);
                    g = d;
                }
            }
        }
        Ok((
            dx,
            MlpGrad {
                layers: layer_grads.into_iter().map(|l| l.expect("every layer visited")).collect(),
                norms: norm_grads,
            },
        ))
    }

    pub fn zero_grad(&self) -> MlpGrad {
        MlpGrad {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            norms: self
                .norms
                .iter()
                .map(|bn| {
                    bn.as_ref().map(|bn| BatchNormGrad {
                        gamma: Array1::zeros(bn.features()),
                        beta: Array1::zeros(bn.features()),
                    })
                })
                .collect(),
        }
    }

    /// Non-trainable state (running statistics), in a fixed order.
    pub fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, bn) in self.norms.iter().enumerate() {
            if let Some(bn) = bn {
                let p = join(prefix, &format!("norms.{i}"));
                f(&join(&p, "running_mean"), bn.running_mean.as_slice().expect("contiguous"));
                f(&join(&p, "running_var"), bn.running_var.as_slice().expect("contiguous"));
            }
        }
    }

    pub fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, bn) in self.norms.iter_mut().enumerate() {
            if let Some(bn) = bn {
                let p = join(prefix, &format!("norms.{i}"));
                f(&join(&p, "running_mean"), bn.running_mean.as_slice_mut().expect("contiguous"));
                f(&join(&p, "running_var"), bn.running_var.as_slice_mut().expect("contiguous"));
            }
        }
    }
}

impl Parameterized for Mlp {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, (layer, bn)) in self.layers.iter().zip(&self.norms).enumerate() {
            layer.visit(&join(prefix, &format!("layers.{i}")), f);
            if let Some(bn) = bn {
                bn.visit(&join(prefix, &format!("norms.{i}")), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, (layer, bn)) in self.layers.iter_mut().zip(&mut self.norms).enumerate() {
            layer.visit_mut(&join(prefix, &format!("layers.{i}")), f);
            if let Some(bn) = bn {
                bn.visit_mut(&join(prefix, &format!("norms.{i}")), f);
            }
        }
    }
}

impl MlpGrad {
    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_assign(b);
        }
        for (a, b) in self.norms.iter_mut().zip(&other.norms) {
            if let (Some(a), Some(b)) = (a, b) {
                a.add_assign(b);
            }
        }
    }
}

impl Parameterized for MlpGrad {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, (layer, bn)) in self.layers.iter().zip(&self.norms).enumerate() {
            layer.visit(&join(prefix, &format!("layers.{i}")), f);
            if let Some(bn) = bn {
                bn.visit(&join(prefix, &format!("norms.{i}")), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, (layer, bn)) in self.layers.iter_mut().zip(&mut self.norms).enumerate() {
            layer.visit_mut(&join(prefix, &format!("layers.{i}")), f);
            if let Some(bn) = bn {
                bn.visit_mut(&join(prefix, &format!("norms.{i}")), f);
            }
        }
    }
}
