//! Command-line interface.
//!
//! Settings resolve in this order: command-line flags, then the `--config`
//! file (flat `key=value` lines, `-` and `_` interchangeable in keys), then
//! `CASTER_SEED` for the seed, then built-in defaults. Training commands write
//! the resolved settings to `config.txt` in their output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use crate::corpus::{
    load_compounds, load_pair_corpus, sample_negative_pairs_over, write_pair_corpus, CorpusKind, PairCorpus,
};
use crate::error::Error;
use crate::eval::{write_history, write_metrics_report};
use crate::featurize::{write_feature_tsv, Featurizer};
use crate::model::{
    load_checkpoint, pretrain, save_checkpoint, train, Architecture, CasterModel, LossWeights, SplitMode,
    TrainingConfig,
};
use crate::smiles::SmilesString;
use crate::spm::{mine_vocabulary, Vocabulary, DEFAULT_MAX_MERGES};
use crate::synthetic::{generate, SyntheticConfig};

pub const SEED_ENV: &str = "CASTER_SEED";

#[derive(Debug, Parser)]
#[command(name = "caster", version, about = "Substructure mining and interpretable interaction prediction")]
pub struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine a substructure vocabulary from a file of SMILES, one per line.
    Mine {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 50)]
        min_freq: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_MERGES)]
        max_merges: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw negative pairs from the complement of a positive pair file.
    SampleNegatives {
        #[arg(long)]
        positives: PathBuf,
        #[arg(long)]
        count: usize,
        /// Extra compounds (one SMILES per line) to include in the universe.
        #[arg(long)]
        drugs: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the functional representation of each pair.
    Featurize {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the auto-encoder and basis on unlabelled pairs.
    Pretrain {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        unlabelled: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train on labelled pairs and report test metrics.
    Train {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        labelled: PathBuf,
        /// Start from this checkpoint (for example a pretrained one).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Score pairs with a trained checkpoint.
    Predict {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the shared substructures of one pair by coefficient.
    Explain {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the planted-motif synthetic dataset.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 400)]
        compounds: usize,
        #[arg(long, default_value_t = 2000)]
        labelled_pairs: usize,
        #[arg(long, default_value_t = 5000)]
        unlabelled_pairs: usize,
    },
}

/// Model and training settings. Unset flags fall back to the config file and
/// then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Flat key=value file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Comma-separated hidden widths.
    #[arg(long)]
    pub encoder_hidden: Option<String>,
    #[arg(long)]
    pub decoder_hidden: Option<String>,
    #[arg(long)]
    pub predictor_hidden: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub magnifier: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// `7:1:2` style ratios or `folds:N`.
    #[arg(long)]
    pub split: Option<String>,
    /// Fold to use with `--split folds:N`.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

const SETTING_KEYS: &[&str] = &[
    "latent_dim",
    "encoder_hidden",
    "decoder_hidden",
    "predictor_hidden",
    "alpha",
    "beta",
    "gamma",
    "lambda1",
    "lambda2",
    "magnifier",
    "batch_size",
    "lr",
    "pretrain_epochs",
    "max_epochs",
    "patience",
    "split",
    "fold",
    "threshold",
    "seed",
];

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub predictor_hidden: Vec<usize>,
    pub weights: LossWeights,
    pub magnifier: f64,
    pub training: TrainingConfig,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidArgument(msg.into()).into()
}

/// Parse a flat `key=value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !SETTING_KEYS.contains(&key.as_str()) {
            return Err(invalid(format!("config line {}: unknown key `{}`", i + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn parse_sizes(s: &str) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<usize>().map_err(|_| invalid(format!("bad layer width {p:?}"))))
        .collect()
}

fn join_sizes(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Merge flags, the config file, the seed variable and defaults.
    pub fn resolve(flags: &Settings, env_seed: Option<&str>) -> anyhow::Result<RunConfig> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        fn pick<T: std::str::FromStr>(
            flag: Option<T>,
            file: &BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> anyhow::Result<T> {
            if let Some(v) = flag {
                return Ok(v);
            }
            match file.get(key) {
                Some(raw) => raw.parse().map_err(|_| invalid(format!("config key `{key}` has invalid value {raw:?}"))),
                None => Ok(default),
            }
        }
        let defaults = Architecture::new(1);
        let dw = LossWeights::default();
        let dt = TrainingConfig::default();
        let sizes = |flag: &Option<String>, key: &str, default: &[usize]| -> anyhow::Result<Vec<usize>> {
            match flag.as_deref().or(file.get(key).map(String::as_str)) {
                Some(s) => parse_sizes(s),
                None => Ok(default.to_vec()),
            }
        };
        let env_seed = match env_seed {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| invalid(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?,
            ),
            None => None,
        };
        let seed = pick(flags.seed, &file, "seed", env_seed.unwrap_or(dt.seed))?;
        let mut split: SplitMode = match flags.split.as_deref().or(file.get("split").map(String::as_str)) {
            Some(s) => s.parse()?,
            None => dt.split.clone(),
        };
        let fold: usize = pick(flags.fold, &file, "fold", 0)?;
        if let SplitMode::Folds { fold: f, .. } = &mut split {
            *f = fold;
        }
        let cfg = RunConfig {
            latent_dim: pick(flags.latent_dim, &file, "latent_dim", defaults.latent_dim)?,
            encoder_hidden: sizes(&flags.encoder_hidden, "encoder_hidden", &defaults.encoder_hidden)?,
            decoder_hidden: sizes(&flags.decoder_hidden, "decoder_hidden", &defaults.decoder_hidden)?,
            predictor_hidden: sizes(&flags.predictor_hidden, "predictor_hidden", &defaults.predictor_hidden)?,
            weights: LossWeights {
                alpha: pick(flags.alpha, &file, "alpha", dw.alpha)?,
                beta: pick(flags.beta, &file, "beta", dw.beta)?,
                gamma: pick(flags.gamma, &file, "gamma", dw.gamma)?,
                lambda1: pick(flags.lambda1, &file, "lambda1", dw.lambda1)?,
                lambda2: pick(flags.lambda2, &file, "lambda2", dw.lambda2)?,
            },
            magnifier: pick(flags.magnifier, &file, "magnifier", crate::model::DEFAULT_MAGNIFIER)?,
            training: TrainingConfig {
                batch_size: pick(flags.batch_size, &file, "batch_size", dt.batch_size)?,
                learning_rate: pick(flags.lr, &file, "lr", dt.learning_rate)?,
                pretrain_epochs: pick(flags.pretrain_epochs, &file, "pretrain_epochs", dt.pretrain_epochs)?,
                max_epochs: pick(flags.max_epochs, &file, "max_epochs", dt.max_epochs)?,
                patience: pick(flags.patience, &file, "patience", dt.patience)?,
                split,
                seed,
                threshold: pick(flags.threshold, &file, "threshold", dt.threshold)?,
            },
        };
        cfg.weights.validate()?;
        cfg.training.validate()?;
        if !(cfg.magnifier.is_finite() && cfg.magnifier > 0.0) {
            return Err(invalid("magnifier must be positive"));
        }
        Ok(cfg)
    }

    pub fn architecture(&self, k: usize) -> Architecture {
        Architecture {
            latent_dim: self.latent_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            decoder_hidden: self.decoder_hidden.clone(),
            predictor_hidden: self.predictor_hidden.clone(),
            ..Architecture::new(k)
        }
    }

    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.training;
        let fold = match t.split {
            SplitMode::Folds { fold, .. } => fold,
            SplitMode::Ratio { .. } => 0,
        };
        let rows = [
            ("latent_dim", self.latent_dim.to_string()),
            ("encoder_hidden", join_sizes(&self.encoder_hidden)),
            ("decoder_hidden", join_sizes(&self.decoder_hidden)),
            ("predictor_hidden", join_sizes(&self.predictor_hidden)),
            ("alpha", self.weights.alpha.to_string()),
            ("beta", self.weights.beta.to_string()),
            ("gamma", self.weights.gamma.to_string()),
            ("lambda1", self.weights.lambda1.to_string()),
            ("lambda2", self.weights.lambda2.to_string()),
            ("magnifier", self.magnifier.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("lr", t.learning_rate.to_string()),
            ("pretrain_epochs", t.pretrain_epochs.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("split", t.split.to_string()),
            ("fold", fold.to_string()),
            ("threshold", t.threshold.to_string()),
            ("seed", t.seed.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

fn env_seed() -> Option<String> {
    std::env::var(SEED_ENV).ok()
}

fn resolve_seed(flag: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    Ok(RunConfig::resolve(&Settings::default(), env_seed().as_deref())?.training.seed)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_vocab(path: &Path) -> anyhow::Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

/// Load a pair file as labelled when it has a `label` column.
fn load_pairs(path: &Path) -> anyhow::Result<PairCorpus> {
    let header = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?
        .lines()
        .find(|l| !l.trim().is_empty())
        .unwrap_or_default()
        .to_string();
    let labelled = header.split('\t').any(|c| c.trim().eq_ignore_ascii_case("label"));
    let kind = if labelled {
        CorpusKind::Labelled
    } else {
        CorpusKind::Unlabelled
    };
    Ok(load_pair_corpus(path, kind)?)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn new_model(cfg: &RunConfig, vocab: &Vocabulary) -> anyhow::Result<CasterModel> {
    Ok(CasterModel::new(
        cfg.architecture(vocab.len()),
        cfg.weights,
        cfg.magnifier,
        vocab.sha256(),
        cfg.training.seed,
    )?)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Mine {
            corpus,
            min_freq,
            max_merges,
            out,
        } => {
            if min_freq == 0 {
                return Err(invalid("--min-freq must be at least 1"));
            }
            let (compounds, _) = load_compounds(&corpus)?;
            let seqs: Vec<_> = compounds.iter().map(SmilesString::tokenize).collect();
            let vocab = mine_vocabulary(&seqs, min_freq, max_merges)?;
            vocab.save(&out)?;
            println!("k={} merges={}", vocab.len(), vocab.merges().len());
        }
        Command::SampleNegatives {
            positives,
            count,
            drugs,
            seed,
            out,
        } => {
            let positives = load_pair_corpus(&positives, CorpusKind::Labelled)?;
            let drugs = match drugs {
                Some(p) => load_compounds(&p)?.0,
                None => Vec::new(),
            };
            let negatives = sample_negative_pairs_over(&drugs, &positives, count, resolve_seed(seed)?)?;
            write_pair_corpus(&out, &negatives)?;
        }
        Command::Featurize { vocab, pairs, out } => {
            let vocab = load_vocab(&vocab)?;
            let corpus = load_pairs(&pairs)?;
            let vectors = Featurizer::new(&vocab).corpus(&corpus);
            let labels = corpus.labels();
            let mut w = create(&out)?;
            write_feature_tsv(&mut w, &vectors, labels.as_deref())?;
            w.flush()?;
        }
        Command::Pretrain {
            vocab,
            unlabelled,
            out_dir,
            settings,
        } => {
            let cfg = RunConfig::resolve(&settings, env_seed().as_deref())?;
            let vocab = load_vocab(&vocab)?;
            let corpus = load_pair_corpus(&unlabelled, CorpusKind::Unlabelled)?;
            if corpus.is_empty() {
                return Err(invalid("the unlabelled corpus is empty"));
            }
            fs::create_dir_all(&out_dir)?;
            write_text(&out_dir.join("config.txt"), &cfg.to_text())?;
            let mut model = new_model(&cfg, &vocab)?;
            let vectors = Featurizer::new(&vocab).corpus(&corpus);
            let report = pretrain(&mut model, &vectors, &cfg.training)?;
            save_checkpoint(out_dir.join("pretrained.ckpt"), &model)?;
            let mut w = create(&out_dir.join("pretrain_history.tsv"))?;
            write_history(&mut w, &report.epochs)?;
            w.flush()?;
            info!("wrote {}", out_dir.join("pretrained.ckpt").display());
        }
        Command::Train {
            vocab,
            labelled,
            init,
            out_dir,
            settings,
        } => {
            let cfg = RunConfig::resolve(&settings, env_seed().as_deref())?;
            let vocab = load_vocab(&vocab)?;
            let corpus = load_pair_corpus(&labelled, CorpusKind::Labelled)?;
            let labels = corpus.labels().expect("labelled corpus");
            let mut model = match &init {
                Some(path) => {
                    let mut m = load_checkpoint(path, Some(&vocab.sha256()))?;
                    if m.arch != cfg.architecture(vocab.len()) {
                        warn!("architecture flags are ignored when starting from a checkpoint");
                    }
                    m.weights = cfg.weights;
                    m.magnifier = cfg.magnifier;
                    m
                }
                None => new_model(&cfg, &vocab)?,
            };
            fs::create_dir_all(&out_dir)?;
            write_text(&out_dir.join("config.txt"), &cfg.to_text())?;
            let vectors = Featurizer::new(&vocab).corpus(&corpus);
            let report = train(&mut model, &vectors, &labels, &cfg.training)?;
            save_checkpoint(out_dir.join("best.ckpt"), &model)?;
            let mut w = create(&out_dir.join("history.tsv"))?;
            write_history(&mut w, &report.history)?;
            w.flush()?;
            let mut w = create(&out_dir.join("metrics.tsv"))?;
            write_metrics_report(&mut w, &report.test)?;
            w.flush()?;
            println!(
                "best epoch {}: validation ROC-AUC {:.4}; test ROC-AUC {:.4}, PR-AUC {:.4}, F1 {:.4}",
                report.best_epoch, report.best_val_roc_auc, report.test.roc_auc, report.test.pr_auc, report.test.f1
            );
        }
        Command::Predict {
            vocab,
            checkpoint,
            pairs,
            out,
        } => {
            let vocab = load_vocab(&vocab)?;
            let model = load_checkpoint(&checkpoint, Some(&vocab.sha256()))?;
            let corpus = load_pairs(&pairs)?;
            let scores = model.predict(&Featurizer::new(&vocab).corpus(&corpus))?;
            let mut w = create(&out)?;
            writeln!(w, "pair_id\tprobability")?;
            for (i, p) in scores.iter().enumerate() {
                writeln!(w, "{i}\t{p:.6}")?;
            }
            w.flush()?;
        }
        Command::Explain {
            vocab,
            checkpoint,
            left,
            right,
            out,
        } => {
            let vocab = load_vocab(&vocab)?;
            let model = load_checkpoint(&checkpoint, Some(&vocab.sha256()))?;
            let left = SmilesString::parse(&left).context("left compound")?;
            let right = SmilesString::parse(&right).context("right compound")?;
            let ex = model.explain(&left, &right, &vocab)?;
            let mut w: Box<dyn Write> = match out {
                Some(p) => Box::new(create(&p)?),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(w, "# probability\t{:.6}", ex.probability)?;
            writeln!(w, "substructure\tcoefficient")?;
            for (s, c) in &ex.entries {
                writeln!(w, "{s}\t{c:.6}")?;
            }
            w.flush()?;
        }
        Command::Synth {
            out_dir,
            seed,
            compounds,
            labelled_pairs,
            unlabelled_pairs,
        } => {
            let cfg = SyntheticConfig {
                compounds,
                labelled_pairs,
                unlabelled_pairs,
                ..SyntheticConfig::default()
            };
            generate(&cfg, resolve_seed(seed)?)?.write_to(&out_dir)?;
        }
    }
    Ok(())
}

/// Process exit code for an error: 2 for invalid input, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::MissingClass { .. }
            | Error::VocabularyMismatch { .. }
            | Error::Schema { .. }
            | Error::MalformedRow { .. }
            | Error::DuplicatePair { .. }
            | Error::Parse { .. },
        ) => 2,
        _ => 1,
    }
}
