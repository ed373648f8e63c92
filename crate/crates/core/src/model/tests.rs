use std::sync::Arc;

use ndarray::{array, Array1, Array2};
use rand::Rng;

use super::*;
use crate::featurize::FunctionalVector;
use crate::nn::{gradient_check, NormMode, Parameterized};
use crate::rng::{stream, Stream};

const VOCAB: &str = "toy-vocabulary";

fn arch(k: usize, d: usize, enc: &[usize], pred: &[usize], bn: bool) -> Architecture {
    Architecture {
        latent_dim: d,
        encoder_hidden: enc.to_vec(),
        decoder_hidden: enc.iter().rev().copied().collect(),
        predictor_hidden: pred.to_vec(),
        predictor_batch_norm: bn,
        ..Architecture::new(k)
    }
}

fn model(a: Architecture, seed: u64) -> CasterModel {
    CasterModel::new(a, LossWeights::default(), DEFAULT_MAGNIFIER, VOCAB, seed).unwrap()
}

fn fv(active: Vec<usize>, k: usize) -> FunctionalVector {
    FunctionalVector::from_active(active, k, Arc::from(VOCAB)).unwrap()
}

fn random_batch<R: Rng>(rng: &mut R, n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, k), || f64::from(u8::from(rng.gen_bool(0.4))))
}

#[test]
fn linear_encoder_picks_weight_columns() {
    let mut m = model(arch(5, 3, &[], &[4], false), 1);
    let w = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 * 0.1);
    m.encoder.layers[0].weight = w.clone();
    let z = m.encode(&fv(vec![0], 5)).unwrap();
    assert_eq!(z, w.column(0).to_owned());

    m.encoder.layers[0].bias = array![1.0, -2.0, 0.5];
    let z0 = m.encode(&fv(vec![], 5)).unwrap();
    assert_eq!(z0, array![1.0, -2.0, 0.5]);
}

#[test]
fn default_encoder_is_repeatable() {
    let m = model(Architecture::new(60), 2);
    let x = fv(vec![1, 7, 30, 59], 60);
    let a = m.encode(&x).unwrap();
    let b = m.encode(&x).unwrap();
    assert_eq!(a.len(), 50);
    assert!(a.iter().all(|v| v.is_finite()));
    assert_eq!(a.mapv(f64::to_bits), b.mapv(f64::to_bits));
}

#[test]
fn encode_checks_dimension_and_vocabulary() {
    let m = model(arch(6, 2, &[4], &[4], false), 1);
    assert!(m.encode(&fv(vec![0], 7)).is_err());
    let other = FunctionalVector::from_active(vec![0], 6, Arc::from("other")).unwrap();
    assert!(matches!(m.encode(&other), Err(Error::VocabularyMismatch { .. })));
    assert!(m.decode(Array1::zeros(3).view()).is_err());
}

#[test]
fn decoder_outputs() {
    let mut m = model(arch(6, 2, &[], &[4], false), 1);
    m.decoder.layers[0].weight.fill(0.0);
    let xhat = m.decode(array![3.0, -1.0].view()).unwrap();
    assert!(xhat.iter().all(|&v| v == 0.5));
    m.decoder.layers[0].bias.fill(30.0);
    let xhat = m.decode(array![3.0, -1.0].view()).unwrap();
    assert!(xhat.iter().all(|&v| v < 1.0 && 1.0 - v < 1e-12));
}

#[test]
fn basis_of_linear_encoder() {
    let mut m = model(arch(4, 2, &[], &[4], false), 3);
    let b = m.dictionary_basis();
    assert_eq!(b.matrix, m.encoder.layers[0].weight);
    m.encoder.layers[0].weight.fill(0.0);
    m.encoder.layers[0].bias = array![0.25, -4.0];
    let b = m.dictionary_basis();
    for i in 0..4 {
        assert_eq!(b.column(i).to_vec(), vec![0.25, -4.0]);
    }
}

#[test]
fn basis_columns_are_encodings_of_single_hots() {
    let m = model(arch(5, 2, &[6, 6], &[4], false), 4);
    let b = m.dictionary_basis();
    assert_eq!(b.matrix.dim(), (2, 5));
    for i in 0..5 {
        let z = m.encode(&fv(vec![i], 5)).unwrap();
        for (a, c) in z.iter().zip(b.column(i)) {
            assert!((a - c).abs() < 1e-14);
        }
    }
}

#[test]
fn zero_predictor_gives_one_half() {
    let mut m = model(arch(6, 2, &[4], &[5, 3], true), 5);
    for layer in &mut m.predictor.layers {
        layer.weight.fill(0.0);
    }
    let r = Coefficients::new(array![1.0, -2.0, 0.0, 3.0, 0.5, 9.0], 100.0).unwrap();
    assert_eq!(m.predict_probability(&r).unwrap(), 0.5);
}

#[test]
fn magnifier_trades_with_first_layer_scale() {
    let m = model(arch(6, 2, &[4], &[5, 3], true), 6);
    let mut scaled = m.clone();
    scaled.magnifier *= 2.0;
    scaled.predictor.layers[0].weight *= 0.5;
    let x = fv(vec![0, 2, 3], 6);
    let a = m.predict_probability(&m.coefficients(&x).unwrap()).unwrap();
    let b = scaled.predict_probability(&scaled.coefficients(&x).unwrap()).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn coefficients_solve_the_ridge_problem() {
    let m = model(arch(9, 4, &[8], &[4], false), 7);
    let x = fv(vec![1, 4, 8], 9);
    let r = m.coefficients(&x).unwrap();
    let z = m.encode(&x).unwrap();
    let b = m.dictionary_basis().matrix;
    let expected = ridge_primal(z.view(), b.view(), m.weights.lambda1).unwrap();
    assert!((&r.r - &expected).iter().all(|v| v.abs() < 1e-8 * expected.iter().fold(1.0f64, |a, v| a.max(v.abs()))));
    assert_eq!(r.magnified(), &r.r * 100.0);
}

#[test]
fn losses_are_non_negative() {
    let mut rng = stream(8, Stream::Test);
    let m = model(arch(10, 3, &[6], &[6, 4], true), 8);
    let x = random_batch(&mut rng, 6, 10);
    let y = [true, false, true, true, false, false];
    let l = m.loss(x.view(), Some(&y), NormMode::Batch).unwrap();
    assert!(l.reconstruction >= 0.0 && l.projection >= 0.0 && l.classification.unwrap() >= 0.0);
    let w = m.weights;
    let expected = w.alpha * l.reconstruction + w.beta * l.projection + w.gamma * l.classification.unwrap();
    assert!((l.total - expected).abs() < 1e-12);
}

#[test]
fn projection_loss_at_the_optimum_is_a_quadratic_form() {
    let mut rng = stream(9, Stream::Test);
    let mut m = model(arch(8, 3, &[5], &[4], false), 9);
    m.weights.lambda2 = 0.0;
    m.weights.lambda1 = 0.3;
    let x = random_batch(&mut rng, 5, 8);
    let l = m.loss(x.view(), None, NormMode::Running).unwrap();
    let z = m.encoder.infer(x.view()).unwrap();
    let b = m.dictionary_basis().matrix;
    let mm = b.dot(&b.t()) + Array2::<f64>::eye(3) * 0.3;
    let minv = crate::nn::linalg::Cholesky::factor(mm.view()).unwrap().inverse();
    let mut q = 0.0;
    for row in z.rows() {
        q += 0.5 * 0.3 * row.dot(&minv.dot(&row));
    }
    assert!((l.projection - q / 5.0).abs() < 1e-10 * q.max(1.0));
}

fn full_gradient_check(weights: LossWeights, labelled: bool, seed: u64) {
    let mut rng = stream(seed, Stream::Test);
    let mut m = CasterModel::new(arch(12, 4, &[8], &[8, 8], true), weights, DEFAULT_MAGNIFIER, VOCAB, seed).unwrap();
    // non-trivial frozen statistics, and a milder magnifier keeps the check well conditioned
    for bn in m.predictor.norms.iter_mut().flatten() {
        bn.running_mean.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        bn.running_var.mapv_inplace(|_| rng.gen_range(0.5..2.0));
    }
    // keep zero input rows off the ReLU kink
    m.visit_mut("", &mut |name, s| {
        if name.ends_with("bias") {
            s.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    });
    let x = random_batch(&mut rng, 7, 12);
    let y: Vec<bool> = (0..7).map(|i| i % 2 == 0).collect();
    let labels = labelled.then_some(y.as_slice());
    let (_, grad) = m.gradients(x.view(), labels, NormMode::Running).unwrap();
    let point = m.flatten();
    let mut probe = m.clone();
    let report = gradient_check(
        |p| {
            let mut pos = 0;
            probe.visit_mut("", &mut |_, s| {
                s.copy_from_slice(&p[pos..pos + s.len()]);
                pos += s.len();
            });
            Ok(probe.loss(x.view(), labels, NormMode::Running)?.total)
        },
        &point,
        &grad.flatten(),
        1e-5,
    )
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn aggregated_gradient_matches_finite_differences() {
    let w = LossWeights {
        lambda1: 1e-2,
        ..LossWeights::default()
    };
    full_gradient_check(w, true, 10);
}

#[test]
fn each_loss_term_has_a_correct_gradient() {
    let base = LossWeights {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        lambda1: 0.05,
        lambda2: 0.0,
    };
    full_gradient_check(LossWeights { alpha: 1.0, ..base }, false, 11);
    full_gradient_check(LossWeights { beta: 1.0, ..base }, false, 12);
    full_gradient_check(LossWeights { beta: 1.0, lambda2: 0.3, ..base }, false, 13);
    full_gradient_check(LossWeights { gamma: 1.0, ..base }, true, 14);
}

#[test]
fn basis_tracks_parameter_updates() {
    let mut rng = stream(15, Stream::Test);
    let mut m = model(arch(10, 3, &[6], &[6, 4], true), 15);
    let mut opt = crate::nn::AdamState::new(crate::nn::AdamConfig::default());
    let x = random_batch(&mut rng, 8, 10);
    let y = [true, false, true, false, true, false, true, false];
    let before = m.dictionary_basis();
    m.train_step(x.view(), Some(&y), &mut opt).unwrap();
    let after = m.dictionary_basis();
    assert_ne!(before, after);
    for i in 0..10 {
        let z = m.encode(&fv(vec![i], 10)).unwrap();
        assert_eq!(z.to_vec(), after.column(i).to_vec());
    }
}

#[test]
fn rejects_invalid_configuration() {
    let w = LossWeights::default();
    assert!(CasterModel::new(Architecture::new(50), w, 100.0, VOCAB, 0).is_err());
    let bad = LossWeights { lambda1: 0.0, ..w };
    assert!(CasterModel::new(Architecture::new(60), bad, 100.0, VOCAB, 0).is_err());
    let neg = LossWeights { alpha: -1.0, ..w };
    assert!(neg.validate().is_err());
    assert!(CasterModel::new(Architecture::new(60), w, 0.0, VOCAB, 0).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut rng = stream(16, Stream::Test);
    let mut m = model(arch(10, 3, &[6], &[6, 4], true), 16);
    let mut opt = crate::nn::AdamState::new(crate::nn::AdamConfig::default());
    let x = random_batch(&mut rng, 8, 10);
    let y = [true, false, true, false, true, false, true, false];
    m.train_step(x.view(), Some(&y), &mut opt).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &m).unwrap();
    let back = read_checkpoint(buf.as_slice(), Some(VOCAB)).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.predict_dense(x.view()).unwrap(), m.predict_dense(x.view()).unwrap());
    assert!(matches!(
        read_checkpoint(buf.as_slice(), Some("another")),
        Err(Error::VocabularyMismatch { .. })
    ));
}

#[test]
fn malformed_checkpoints_are_rejected() {
    let m = model(arch(6, 2, &[4], &[4], true), 17);
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &m).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let cases = [
        text.replacen("caster-ckpt v1", "caster-ckpt v9", 1),
        text.replacen("k=6", "k=7", 1),
        text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n"),
        text.replacen("encoder.layers.0.bias", "encoder.layers.0.other", 1),
    ];
    for case in cases {
        assert!(matches!(read_checkpoint(case.as_bytes(), None), Err(Error::CheckpointFormat(_))), "{case}");
    }
}

#[test]
fn split_fractions_and_classes() {
    let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
    let s = split_indices(&labels, &SplitMode::default(), 3).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 10, 20));
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_eq!(s, split_indices(&labels, &SplitMode::default(), 3).unwrap());

    let mut one_positive = vec![false; 50];
    one_positive[0] = true;
    assert!(matches!(
        split_indices(&one_positive, &SplitMode::default(), 3),
        Err(Error::MissingClass { .. })
    ));

    let folds = split_indices(&labels, &SplitMode::Folds { n: 2, fold: 1 }, 3).unwrap();
    assert_eq!(folds.train.len() + folds.val.len() + folds.test.len(), 50);
    assert_eq!("7:1:2".parse::<SplitMode>().unwrap(), SplitMode::default());
    assert!("7:1".parse::<SplitMode>().is_err());
    assert!("folds:1".parse::<SplitMode>().is_err());
}

#[test]
fn batches_never_leave_a_single_row() {
    let mut rng = stream(18, Stream::Test);
    let rows: Vec<usize> = (0..11).collect();
    let b = batches(&rows, 5, &mut rng);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![5, 6]);
    let b = batches(&rows, 4, &mut rng);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 3]);
    let mut seen: Vec<usize> = b.into_iter().flatten().collect();
    seen.sort_unstable();
    assert_eq!(seen, rows);
}
