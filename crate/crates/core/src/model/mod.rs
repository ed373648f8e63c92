//! The interaction model.
//!
//! A pair's functional vector `x` (k bits) is encoded to a latent `z` (d
//! dims) and decoded back to `x̂`. The encoder applied to each single-hot
//! substructure indicator gives the dictionary basis `B` (d × k). The latent
//! vector is projected onto that basis by ridge regression, and the magnified
//! coefficients feed a batch-normalized perceptron that outputs the
//! interaction probability.
//!
//! Training minimizes `α·L_r + β·L_p + γ·L_c`: reconstruction cross-entropy,
//! projection loss and classification cross-entropy. Gradients flow through
//! the closed-form ridge solve.

mod checkpoint;
mod explain;
mod loss;
mod ridge;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use explain::Explanation;
pub use loss::{classification_loss, projection_loss, reconstruction_loss, LossBreakdown, PROB_CLAMP};
pub use ridge::{
    ridge_coefficients, ridge_dual, ridge_objective, ridge_primal, Coefficients, DEFAULT_MAGNIFIER,
};
pub use train::{
    batches, pretrain, split_indices, train, EpochRecord, PretrainReport, SplitMode, Splits, TrainReport,
    TrainingConfig,
};

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::featurize::{gather_dense, FunctionalVector};
use crate::nn::{
    join, sigmoid, AdamState, Mlp, MlpCache, MlpGrad, MlpInput, NormMode, Parameterized, DEFAULT_EPSILON,
    DEFAULT_MOMENTUM,
};
use crate::rng::{stream, Stream};

/// Layer widths of the three networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Number of substructures (input width).
    pub k: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub predictor_batch_norm: bool,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
}

impl Architecture {
    /// Full-size defaults: encoder and decoder with two hidden layers of 500,
    /// d = 50, predictor hidden widths 1024, 1024, 1024, 256, 64.
    pub fn new(k: usize) -> Self {
        Architecture {
            k,
            latent_dim: 50,
            encoder_hidden: vec![500, 500],
            decoder_hidden: vec![500, 500],
            predictor_hidden: vec![1024, 1024, 1024, 256, 64],
            predictor_batch_norm: true,
            bn_momentum: DEFAULT_MOMENTUM,
            bn_epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.k];
        s.extend(&self.encoder_hidden);
        s.push(self.latent_dim);
        s
    }

    pub fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent_dim];
        s.extend(&self.decoder_hidden);
        s.push(self.k);
        s
    }

    pub fn predictor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.k];
        s.extend(&self.predictor_hidden);
        s.push(1);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.latent_dim == 0 {
            return Err(Error::invalid("k and the latent dimension must be positive"));
        }
        if self.latent_dim >= self.k {
            return Err(Error::invalid(format!(
                "latent dimension {} must be smaller than the number of substructures {}",
                self.latent_dim, self.k
            )));
        }
        let hidden = self.encoder_hidden.iter().chain(&self.decoder_hidden).chain(&self.predictor_hidden);
        if hidden.clone().any(|&h| h == 0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) || self.bn_epsilon.is_nan() || self.bn_epsilon <= 0.0 {
            return Err(Error::invalid("batch norm momentum must be in (0, 1) and epsilon positive"));
        }
        Ok(())
    }
}

/// Weights of the three loss terms and the two regularizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.1,
            beta: 0.1,
            gamma: 1.0,
            lambda1: 1e-5,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma, self.lambda1, self.lambda2];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if self.lambda1 <= 0.0 {
            return Err(Error::invalid("lambda1 must be positive"));
        }
        Ok(())
    }
}

/// Column `i` of `matrix` (d × k) is the embedding of substructure `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryBasis {
    pub matrix: Array2<f64>,
}

impl DictionaryBasis {
    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.column(i)
    }
}

/// Basis of an encoder: its image of each single-hot indicator.
pub fn dictionary_basis(encoder: &Mlp) -> DictionaryBasis {
    let (rows, _) = encoder
        .forward(MlpInput::Identity(encoder.in_dim()), NormMode::Running)
        .expect("identity input matches encoder width");
    DictionaryBasis {
        matrix: rows.reversed_axes(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CasterModel {
    pub arch: Architecture,
    pub weights: LossWeights,
    pub magnifier: f64,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub predictor: Mlp,
    vocab_id: Arc<str>,
}

/// Parameter gradients, laid out like [`CasterModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CasterGrad {
    pub encoder: MlpGrad,
    pub decoder: MlpGrad,
    pub predictor: MlpGrad,
}

/// Everything the backward pass needs from one forward pass.
struct Pass {
    enc_cache: MlpCache,
    bt: Array2<f64>,
    basis_cache: MlpCache,
    minv: Array2<f64>,
    a: Array2<f64>,
    r: Array2<f64>,
    e: Array2<f64>,
    xhat: Array2<f64>,
    dec_cache: MlpCache,
    pred: Option<(Vec<f64>, MlpCache)>,
    losses: LossBreakdown,
}

impl CasterModel {
    /// Fresh model with seeded Glorot initialization.
    pub fn new(
        arch: Architecture,
        weights: LossWeights,
        magnifier: f64,
        vocab_id: impl Into<Arc<str>>,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        weights.validate()?;
        if !(magnifier.is_finite() && magnifier > 0.0) {
            return Err(Error::invalid("magnifier must be positive"));
        }
        let mut rng = stream(seed, Stream::Init);
        let encoder = Mlp::new(&arch.encoder_sizes(), false, &mut rng)?;
        let decoder = Mlp::new(&arch.decoder_sizes(), false, &mut rng)?;
        let mut predictor = Mlp::new(&arch.predictor_sizes(), arch.predictor_batch_norm, &mut rng)?;
        predictor.set_norm_hyperparameters(arch.bn_momentum, arch.bn_epsilon);
        Ok(CasterModel {
            arch,
            weights,
            magnifier,
            encoder,
            decoder,
            predictor,
            vocab_id: vocab_id.into(),
        })
    }

    pub fn k(&self) -> usize {
        self.arch.k
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    /// Hash of the vocabulary the model was built against.
    pub fn vocab_id(&self) -> &str {
        &self.vocab_id
    }

    pub fn check_vocabulary(&self, vocab_id: &str) -> Result<()> {
        if vocab_id != &*self.vocab_id {
            return Err(Error::VocabularyMismatch {
                expected: self.vocab_id.to_string(),
                found: vocab_id.to_string(),
            });
        }
        Ok(())
    }

    fn check_vector(&self, x: &FunctionalVector) -> Result<()> {
        self.check_vocabulary(x.vocab_id())?;
        if x.dim() != self.k() {
            return Err(Error::shape(format!("vector of dimension {} for a model with k = {}", x.dim(), self.k())));
        }
        Ok(())
    }

    fn dense(&self, x: &FunctionalVector) -> Result<Array2<f64>> {
        self.check_vector(x)?;
        Ok(gather_dense(std::slice::from_ref(x), &[0], self.k()))
    }

    pub fn encode(&self, x: &FunctionalVector) -> Result<Array1<f64>> {
        let z = self.encoder.infer(self.dense(x)?.view())?;
        Ok(z.row(0).to_owned())
    }

    /// Reconstruction probabilities for one latent vector.
    pub fn decode(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::shape(format!("latent of length {} for d = {}", z.len(), self.latent_dim())));
        }
        let logits = self.decoder.infer(z.insert_axis(Axis(0)))?;
        Ok(logits.row(0).mapv(sigmoid))
    }

    pub fn dictionary_basis(&self) -> DictionaryBasis {
        dictionary_basis(&self.encoder)
    }

    /// Ridge coefficients of `x` against the current basis.
    pub fn coefficients(&self, x: &FunctionalVector) -> Result<Coefficients> {
        let (_, r) = self.project(self.dense(x)?.view())?;
        Coefficients::new(r.row(0).to_owned(), self.magnifier)
    }

    pub fn predict_probability(&self, r: &Coefficients) -> Result<f64> {
        let input = r.magnified().insert_axis(Axis(0));
        let logit = self.predictor.infer(input.view())?;
        Ok(sigmoid(logit[[0, 0]]))
    }

    /// Latent vectors and coefficients for a dense batch.
    fn project(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let z = self.encoder.infer(x)?;
        let bt = self.encoder.forward(MlpInput::Identity(self.k()), NormMode::Running)?.0;
        let (r, _, _) = ridge::ridge_rows(z.view(), bt.view(), self.weights.lambda1)?;
        Ok((z, r))
    }

    /// Probabilities for a dense batch, inference mode.
    pub fn predict_dense(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let (_, r) = self.project(x)?;
        let logits = self.predictor.infer((r * self.magnifier).view())?;
        Ok(logits.column(0).iter().map(|&v| sigmoid(v)).collect())
    }

    /// Probabilities for featurized pairs, in input order.
    pub fn predict(&self, vectors: &[FunctionalVector]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(vectors.len());
        for v in vectors {
            self.check_vector(v)?;
        }
        let rows: Vec<usize> = (0..vectors.len()).collect();
        for chunk in rows.chunks(512) {
            out.extend(self.predict_dense(gather_dense(vectors, chunk, self.k()).view())?);
        }
        Ok(out)
    }

    fn forward_pass(&self, x: ArrayView2<f64>, labels: Option<&[bool]>, mode: NormMode) -> Result<Pass> {
        let n = x.nrows();
        if x.ncols() != self.k() {
            return Err(Error::shape(format!("batch with {} columns for k = {}", x.ncols(), self.k())));
        }
        if n == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if labels.is_some_and(|y| y.len() != n) {
            return Err(Error::shape("label count differs from batch size"));
        }
        let w = self.weights;
        let (z, enc_cache) = self.encoder.forward(MlpInput::Batch(x), mode)?;
        let (bt, basis_cache) = self.encoder.forward(MlpInput::Identity(self.k()), mode)?;
        let (r, a, minv) = ridge::ridge_rows(z.view(), bt.view(), w.lambda1)?;
        let e = &z - &r.dot(&bt);
        let (dec_logits, dec_cache) = self.decoder.forward(MlpInput::Batch(z.view()), mode)?;
        let xhat = dec_logits.mapv(sigmoid);

        // the objective uses the logit form of both cross-entropies
        let reconstruction = loss::reconstruction_from_logits(x, dec_logits.view());
        let projection = loss::projection_rows(e.view(), r.view(), bt.view(), w.lambda1, w.lambda2);
        let mut total = w.alpha * reconstruction + w.beta * projection;

        let (pred, classification) = match labels {
            Some(y) => {
                let input = &r * self.magnifier;
                let (logits, cache) = self.predictor.forward(MlpInput::Batch(input.view()), mode)?;
                let s = logits.column(0).to_vec();
                let p: Vec<f64> = s.iter().map(|&v| sigmoid(v)).collect();
                let c = loss::classification_from_logits(&s, y);
                total += w.gamma * c;
                (Some((p, cache)), Some(c))
            }
            None => (None, None),
        };
        let losses = LossBreakdown {
            reconstruction,
            projection,
            classification,
            total,
        };
        Ok(Pass {
            enc_cache,
            bt,
            basis_cache,
            minv,
            a,
            r,
            e,
            xhat,
            dec_cache,
            pred,
            losses,
        })
    }

    /// Aggregated loss of a dense batch. Labels add the classification term.
    pub fn loss(&self, x: ArrayView2<f64>, labels: Option<&[bool]>, mode: NormMode) -> Result<LossBreakdown> {
        Ok(self.forward_pass(x, labels, mode)?.losses)
    }

    /// Loss and parameter gradients of a dense batch.
    pub fn gradients(
        &self,
        x: ArrayView2<f64>,
        labels: Option<&[bool]>,
        mode: NormMode,
    ) -> Result<(LossBreakdown, CasterGrad)> {
        let (losses, grad, _) = self.gradients_with_cache(x, labels, mode)?;
        Ok((losses, grad))
    }

    fn gradients_with_cache(
        &self,
        x: ArrayView2<f64>,
        labels: Option<&[bool]>,
        mode: NormMode,
    ) -> Result<(LossBreakdown, CasterGrad, Option<MlpCache>)> {
        let pass = self.forward_pass(x, labels, mode)?;
        let w = self.weights;
        let n = x.nrows() as f64;

        // classification head
        let mut d_r = Array2::<f64>::zeros(pass.r.dim());
        let (pred_grad, pred_cache) = match (&pass.pred, labels) {
            (Some((p, cache)), Some(y)) => {
                let up = Array2::from_shape_fn((p.len(), 1), |(i, _)| {
                    w.gamma * (p[i] - f64::from(u8::from(y[i]))) / n
                });
                let (d_in, g) = self.predictor.backward(cache, up.view(), true)?;
                d_r += &(d_in.expect("input gradient requested") * self.magnifier);
                (g, Some(cache.clone()))
            }
            _ => (self.predictor.zero_grad(), None),
        };

        // reconstruction
        let d_dec = (&pass.xhat - &x) * (w.alpha / n);
        let (d_z_dec, dec_grad) = self.decoder.backward(&pass.dec_cache, d_dec.view(), true)?;
        let mut d_z = d_z_dec.expect("input gradient requested");

        // projection loss: E = Z − R Bt
        let d_e = &pass.e * (w.beta / n);
        d_z += &d_e;
        d_r -= &d_e.dot(&pass.bt.t());
        d_r += &(&pass.r * (w.beta * w.lambda1 / n));
        let mut d_bt = pass.r.t().dot(&d_e) * -1.0;
        d_bt += &(&pass.bt * (2.0 * w.beta * w.lambda2));

        // ridge solve: R = A Btᵀ, A = Z M⁻¹, M = Btᵀ Bt + λ1 I
        let d_a = d_r.dot(&pass.bt);
        d_bt += &d_r.t().dot(&pass.a);
        let d_a_minv = d_a.dot(&pass.minv);
        d_z += &d_a_minv;
        let m_bar = pass.a.t().dot(&d_a_minv) * -1.0;
        let sym = &m_bar + &m_bar.t();
        d_bt += &pass.bt.dot(&sym);

        let (_, mut enc_grad) = self.encoder.backward(&pass.enc_cache, d_z.view(), false)?;
        let (_, basis_grad) = self.encoder.backward(&pass.basis_cache, d_bt.view(), false)?;
        enc_grad.add_assign(&basis_grad);

        Ok((
            pass.losses,
            CasterGrad {
                encoder: enc_grad,
                decoder: dec_grad,
                predictor: pred_grad,
            },
            pred_cache,
        ))
    }

    /// One optimizer step on a dense batch with batch statistics.
    pub fn train_step(
        &mut self,
        x: ArrayView2<f64>,
        labels: Option<&[bool]>,
        optimizer: &mut AdamState,
    ) -> Result<LossBreakdown> {
        let (losses, grad, cache) = self.gradients_with_cache(x, labels, NormMode::Batch)?;
        losses.check_finite()?;
        optimizer.step(self, &grad)?;
        if let Some(cache) = cache {
            self.predictor.commit_statistics(&cache);
        }
        Ok(losses)
    }

    /// Running statistics of the predictor's normalization layers.
    pub fn visit_buffers(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.predictor.visit_buffers("predictor", f);
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.predictor.visit_buffers_mut("predictor", f);
    }
}

impl Parameterized for CasterModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.predictor.visit(&join(prefix, "predictor"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.predictor.visit_mut(&join(prefix, "predictor"), f);
    }
}

impl Parameterized for CasterGrad {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[f64])) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.predictor.visit(&join(prefix, "predictor"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.predictor.visit_mut(&join(prefix, "predictor"), f);
    }
}

#[cfg(test)]
mod tests;
