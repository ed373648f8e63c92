//! Two-stage optimization: unsupervised pretraining of the auto-encoder and
//! basis, then supervised training of everything with early stopping on
//! validation ROC-AUC.

use std::fmt;
use std::str::FromStr;

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use super::{CasterModel, LossBreakdown};
use crate::error::{Error, Result};
use crate::eval::{evaluate, roc_auc, Metrics};
use crate::featurize::{gather_dense, FunctionalVector};
use crate::nn::{AdamConfig, AdamState};
use crate::rng::{stream, Stream};

/// How labelled pairs are divided into train, validation and test sets.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    /// Shuffle, then cut by the given fractions.
    Ratio { train: f64, val: f64, test: f64 },
    /// Deal the shuffled pairs into `n` disjoint folds, keep fold `fold`, and
    /// split it 7:1:2.
    Folds { n: usize, fold: usize },
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::Ratio {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SplitMode::Ratio { train, val, test } => {
                if [train, val, test].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::invalid("split ratios must be positive"));
                }
                if (train + val + test - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("split ratios must sum to 1"));
                }
            }
            SplitMode::Folds { n, fold } => {
                if n < 2 || fold >= n {
                    return Err(Error::invalid(format!("fold {fold} of {n} is not valid")));
                }
            }
        }
        Ok(())
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    /// `7:1:2` (normalized), or `folds:5`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(n) = s.strip_prefix("folds:") {
            let n = n
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad fold count in {s:?}")))?;
            let mode = SplitMode::Folds { n, fold: 0 };
            mode.validate()?;
            return Ok(mode);
        }
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad split {s:?}, expected e.g. 7:1:2 or folds:5")))?;
        let [a, b, c] = parts[..] else {
            return Err(Error::invalid(format!("split {s:?} needs three parts")));
        };
        let mut sum = a + b + c;
        if (sum - 1.0).abs() < 1e-9 {
            sum = 1.0;
        }
        let mode = SplitMode::Ratio {
            train: a / sum,
            val: b / sum,
            test: c / sum,
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::Ratio { train, val, test } => write!(f, "{train}:{val}:{test}"),
            SplitMode::Folds { n, .. } => write!(f, "folds:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pretrain_epochs: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub split: SplitMode,
    pub seed: u64,
    /// Score threshold for F1.
    pub threshold: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 256,
            learning_rate: 1e-3,
            pretrain_epochs: 1,
            max_epochs: 30,
            patience: 5,
            split: SplitMode::default(),
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max epochs must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold must be in [0, 1]"));
        }
        self.split.validate()
    }

    fn optimizer(&self) -> AdamState {
        AdamState::new(AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_classes(name: &str, rows: &[usize], labels: &[bool]) -> Result<()> {
    for (class, missing) in [(true, "positive"), (false, "negative")] {
        if !rows.iter().any(|&i| labels[i] == class) {
            return Err(Error::MissingClass {
                split: name.to_string(),
                missing: missing.to_string(),
            });
        }
    }
    Ok(())
}

fn cut(rows: Vec<usize>, train: f64, val: f64) -> Splits {
    let n = rows.len();
    let a = (train * n as f64).floor() as usize;
    let b = (((train + val) * n as f64).floor() as usize).max(a);
    Splits {
        train: rows[..a].to_vec(),
        val: rows[a..b].to_vec(),
        test: rows[b..].to_vec(),
    }
}

/// Seeded split of `labels.len()` examples. Every split must hold both classes.
pub fn split_indices(labels: &[bool], mode: &SplitMode, seed: u64) -> Result<Splits> {
    mode.validate()?;
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    perm.shuffle(&mut stream(seed, Stream::Split));
    let splits = match *mode {
        SplitMode::Ratio { train, val, .. } => cut(perm, train, val),
        SplitMode::Folds { n, fold } => {
            let members = perm.into_iter().enumerate().filter(|(j, _)| j % n == fold).map(|(_, i)| i).collect();
            cut(members, 0.7, 0.1)
        }
    };
    check_classes("train", &splits.train, labels)?;
    check_classes("validation", &splits.val, labels)?;
    check_classes("test", &splits.test, labels)?;
    Ok(splits)
}

/// Shuffled mini-batches of `rows`. A trailing batch of one row is folded
/// into the previous batch, since batch statistics need two rows.
pub fn batches<R: Rng>(rows: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order = rows.to_vec();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size.max(2)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

/// Mean losses of one epoch plus the validation score when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub reconstruction: f64,
    pub projection: f64,
    pub classification: Option<f64>,
    pub total: f64,
    pub val_roc_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    pub first_batch_reconstruction: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_roc_auc: f64,
    pub test: Metrics,
    pub splits: Splits,
}

struct EpochSums {
    rows: usize,
    reconstruction: f64,
    projection: f64,
    classification: Option<f64>,
    total: f64,
}

impl EpochSums {
    fn new(labelled: bool) -> Self {
        EpochSums {
            rows: 0,
            reconstruction: 0.0,
            projection: 0.0,
            classification: labelled.then_some(0.0),
            total: 0.0,
        }
    }

    fn add(&mut self, l: &LossBreakdown, rows: usize) {
        let w = rows as f64;
        self.rows += rows;
        self.reconstruction += w * l.reconstruction;
        self.projection += w * l.projection;
        self.total += w * l.total;
        if let (Some(c), Some(v)) = (self.classification.as_mut(), l.classification) {
            *c += w * v;
        }
    }

    fn record(&self, epoch: usize, val_roc_auc: Option<f64>) -> EpochRecord {
        let n = self.rows.max(1) as f64;
        EpochRecord {
            epoch,
            reconstruction: self.reconstruction / n,
            projection: self.projection / n,
            classification: self.classification.map(|c| c / n),
            total: self.total / n,
            val_roc_auc,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_epoch<R: Rng>(
    model: &mut CasterModel,
    data: &[FunctionalVector],
    labels: Option<&[bool]>,
    rows: &[usize],
    config: &TrainingConfig,
    optimizer: &mut AdamState,
    rng: &mut R,
    epoch: usize,
    mut on_batch: impl FnMut(&LossBreakdown),
) -> Result<EpochSums> {
    let mut sums = EpochSums::new(labels.is_some());
    for (b, batch) in batches(rows, config.batch_size, rng).into_iter().enumerate() {
        let x: Array2<f64> = gather_dense(data, &batch, model.k());
        let y: Option<Vec<bool>> = labels.map(|l| batch.iter().map(|&i| l[i]).collect());
        let losses = model
            .train_step(x.view(), y.as_deref(), optimizer)
            .map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
        on_batch(&losses);
        sums.add(&losses, batch.len());
    }
    Ok(sums)
}

fn check_inputs(model: &CasterModel, data: &[FunctionalVector]) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::invalid("need at least two pairs to train"));
    }
    for v in data {
        model.check_vocabulary(v.vocab_id())?;
        if v.dim() != model.k() {
            return Err(Error::shape("feature dimension differs from the model"));
        }
    }
    Ok(())
}

/// Minimize `α·L_r + β·L_p` over unlabelled pairs.
pub fn pretrain(model: &mut CasterModel, data: &[FunctionalVector], config: &TrainingConfig) -> Result<PretrainReport> {
    config.validate()?;
    check_inputs(model, data)?;
    let mut optimizer = config.optimizer();
    let mut rng = stream(config.seed, Stream::Shuffle);
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut first = None;
    let mut epochs = Vec::new();
    for epoch in 1..=config.pretrain_epochs {
        let sums = run_epoch(model, data, None, &rows, config, &mut optimizer, &mut rng, epoch, |l| {
            first.get_or_insert(l.reconstruction);
        })?;
        let rec = sums.record(epoch, None);
        info!(
            "pretrain epoch {epoch}: reconstruction {:.4}, projection {:.4}",
            rec.reconstruction, rec.projection
        );
        epochs.push(rec);
    }
    Ok(PretrainReport {
        first_batch_reconstruction: first,
        epochs,
    })
}

fn score(model: &CasterModel, data: &[FunctionalVector], rows: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(512) {
        out.extend(model.predict_dense(gather_dense(data, chunk, model.k()).view())?);
    }
    Ok(out)
}

/// Minimize `α·L_r + β·L_p + γ·L_c` on the training split, keep the
/// parameters with the best validation ROC-AUC and report test metrics.
pub fn train(
    model: &mut CasterModel,
    data: &[FunctionalVector],
    labels: &[bool],
    config: &TrainingConfig,
) -> Result<TrainReport> {
    config.validate()?;
    check_inputs(model, data)?;
    if labels.len() != data.len() {
        return Err(Error::shape("label count differs from pair count"));
    }
    let splits = split_indices(labels, &config.split, config.seed)?;
    if splits.train.len() < 2 {
        return Err(Error::invalid("training split needs at least two pairs"));
    }
    let val_labels: Vec<bool> = splits.val.iter().map(|&i| labels[i]).collect();
    let mut optimizer = config.optimizer();
    let mut rng = stream(config.seed, Stream::Shuffle);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, CasterModel)> = None;
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        let sums = run_epoch(model, data, Some(labels), &splits.train, config, &mut optimizer, &mut rng, epoch, |_| {})?;
        let auc = roc_auc(&score(model, data, &splits.val)?, &val_labels)?;
        let rec = sums.record(epoch, Some(auc));
        info!(
            "epoch {epoch}: loss {:.4} (classification {:.4}), validation ROC-AUC {auc:.4}",
            rec.total,
            rec.classification.unwrap_or(f64::NAN)
        );
        history.push(rec);
        if best.as_ref().is_none_or(|(_, b, _)| auc > *b) {
            best = Some((epoch, auc, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                info!("no improvement for {stale} epochs, stopping");
                break;
            }
        }
    }
    let (best_epoch, best_val_roc_auc, best_model) = best.expect("at least one epoch");
    *model = best_model;
    let test_labels: Vec<bool> = splits.test.iter().map(|&i| labels[i]).collect();
    let test = evaluate(&score(model, data, &splits.test)?, &test_labels, config.threshold)?;
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_roc_auc,
        test,
        splits,
    })
}
