//! Desk-scale training setup shared by the integration tests.
#![allow(dead_code)]

use caster::featurize::{Featurizer, FunctionalVector};
use caster::model::{Architecture, CasterModel, LossWeights, TrainingConfig, DEFAULT_MAGNIFIER};
use caster::smiles::SmilesString;
use caster::spm::{mine_vocabulary, Vocabulary};
use caster::synthetic::{generate, SyntheticConfig, SyntheticData};

/// Frequency threshold for the synthetic corpus (400 compounds).
pub const DESK_ETA: u64 = 30;
/// Latent width of the desk architecture.
pub const DESK_LATENT: usize = 4;

pub struct Prepared {
    pub data: SyntheticData,
    pub vocab: Vocabulary,
    pub labelled: Vec<FunctionalVector>,
    pub labels: Vec<bool>,
    pub unlabelled: Vec<FunctionalVector>,
}

pub fn prepare(data_seed: u64) -> Prepared {
    prepare_with(&SyntheticConfig::default(), data_seed)
}

pub fn prepare_with(cfg: &SyntheticConfig, data_seed: u64) -> Prepared {
    let data = generate(cfg, data_seed).unwrap();
    let seqs: Vec<_> = data.compounds.iter().map(SmilesString::tokenize).collect();
    let vocab = mine_vocabulary(&seqs, DESK_ETA, 30_000).unwrap();
    let f = Featurizer::new(&vocab);
    let labelled = f.corpus(&data.labelled);
    let labels = data.labelled.labels().unwrap();
    let unlabelled = f.corpus(&data.unlabelled);
    Prepared {
        data,
        vocab,
        labelled,
        labels,
        unlabelled,
    }
}

/// Small layers, same depth as the full-size defaults.
pub fn desk_architecture(k: usize) -> Architecture {
    Architecture {
        latent_dim: DESK_LATENT,
        encoder_hidden: vec![64, 64],
        decoder_hidden: vec![64, 64],
        predictor_hidden: vec![128, 128, 128, 64, 32],
        ..Architecture::new(k)
    }
}

pub fn desk_model(vocab: &Vocabulary, weights: LossWeights, seed: u64) -> CasterModel {
    CasterModel::new(desk_architecture(vocab.len()), weights, DEFAULT_MAGNIFIER, vocab.sha256(), seed).unwrap()
}

pub fn desk_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        batch_size: 64,
        max_epochs: 20,
        seed,
        ..TrainingConfig::default()
    }
}
