mod common;

use caster::model::{pretrain, train, CasterModel, LossWeights, TrainingConfig, DEFAULT_MAGNIFIER};
use caster::nn::Parameterized;
use caster::synthetic::SyntheticConfig;

use common::{desk_config, desk_model, prepare, prepare_with};

fn small() -> common::Prepared {
    let cfg = SyntheticConfig {
        labelled_pairs: 400,
        unlabelled_pairs: 1000,
        ..SyntheticConfig::default()
    };
    prepare_with(&cfg, 21)
}

#[test]
fn pretraining_reduces_reconstruction_loss() {
    let p = prepare(0);
    let mut m = desk_model(&p.vocab, LossWeights::default(), 0);
    let report = pretrain(&mut m, &p.unlabelled, &desk_config(0)).unwrap();
    assert_eq!(report.epochs.len(), 1);
    let first = report.first_batch_reconstruction.unwrap();
    let last = report.epochs[0].reconstruction;
    assert!(last < first, "epoch mean {last} vs first batch {first}");
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let p = small();
    let w = LossWeights {
        alpha: 0.0,
        beta: 0.0,
        ..LossWeights::default()
    };
    let mut m = desk_model(&p.vocab, w, 1);
    let before = m.flatten();
    let report = pretrain(&mut m, &p.unlabelled, &desk_config(1)).unwrap();
    assert_eq!(report.epochs[0].total, 0.0);
    assert_eq!(m.flatten(), before);
}

#[test]
fn same_seed_same_parameters() {
    let p = small();
    let run = || {
        let mut m = desk_model(&p.vocab, LossWeights::default(), 2);
        let cfg = TrainingConfig {
            max_epochs: 3,
            ..desk_config(2)
        };
        pretrain(&mut m, &p.unlabelled, &cfg).unwrap();
        let report = train(&mut m, &p.labelled, &p.labels, &cfg).unwrap();
        (m.flatten(), report.test)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn zero_patience_stops_after_first_stall() {
    let p = small();
    // no batch norm and no learning: every epoch scores the same
    let arch = caster::model::Architecture {
        predictor_batch_norm: false,
        ..common::desk_architecture(p.vocab.len())
    };
    let mut m = CasterModel::new(arch, LossWeights::default(), DEFAULT_MAGNIFIER, p.vocab.sha256(), 3).unwrap();
    let cfg = TrainingConfig {
        learning_rate: 0.0,
        patience: 0,
        ..desk_config(3)
    };
    let report = train(&mut m, &p.labelled, &p.labels, &cfg).unwrap();
    assert_eq!(report.history.len(), 2);
    assert_eq!(report.best_epoch, 1);
}

#[test]
fn best_epoch_is_restored() {
    let p = small();
    let mut m = desk_model(&p.vocab, LossWeights::default(), 4);
    let cfg = TrainingConfig {
        max_epochs: 8,
        ..desk_config(4)
    };
    let report = train(&mut m, &p.labelled, &p.labels, &cfg).unwrap();
    let best = &report.history[report.best_epoch - 1];
    assert_eq!(best.val_roc_auc, Some(report.best_val_roc_auc));
    let val: Vec<_> = report.splits.val.iter().map(|&i| p.labelled[i].clone()).collect();
    let y: Vec<bool> = report.splits.val.iter().map(|&i| p.labels[i]).collect();
    let auc = caster::eval::roc_auc(&m.predict(&val).unwrap(), &y).unwrap();
    assert!((auc - report.best_val_roc_auc).abs() < 1e-12);
}

/// Without the classification term the predictor never learns, so validation
/// ROC-AUC hovers around chance. Scored over every epoch rather than the
/// early-stopping pick, which would select the luckiest epoch.
#[test]
fn no_supervision_stays_at_chance() {
    let w = LossWeights {
        gamma: 0.0,
        ..LossWeights::default()
    };
    let mut per_seed = Vec::new();
    for seed in 0..5 {
        let p = prepare(seed);
        let mut m = desk_model(&p.vocab, w, seed);
        let cfg = desk_config(seed);
        pretrain(&mut m, &p.unlabelled, &cfg).unwrap();
        let report = train(&mut m, &p.labelled, &p.labels, &cfg).unwrap();
        let aucs: Vec<f64> = report.history.iter().map(|e| e.val_roc_auc.unwrap()).collect();
        per_seed.push(aucs.iter().sum::<f64>() / aucs.len() as f64);
    }
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    println!("validation ROC-AUC without supervision: mean {mean:.3}, per seed {per_seed:.3?}");
    assert!((mean - 0.5).abs() <= 0.1, "mean validation ROC-AUC {mean} ({per_seed:?})");
}
