//! Ranking and thresholded classification metrics, and the stability of
//! coefficient vectors across runs.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::EpochRecord;

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {i}")));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC-AUC needs both positive and negative labels"));
    }
    // count in half units so the result is one exact division
    let mut half_units: u128 = 0;
    let mut negatives_below = neg as u128;
    for group in tie_groups(scores) {
        let p = group.iter().filter(|&&i| labels[i]).count() as u128;
        let n = group.len() as u128 - p;
        negatives_below -= n;
        half_units += p * (2 * negatives_below + n);
    }
    Ok(half_units as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Area under the precision-recall curve, step-wise: the sum over distinct
/// thresholds (high to low) of the recall increase times the precision there.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::invalid("PR-AUC needs at least one positive label"));
    }
    let (mut tp, mut fp, mut area) = (0usize, 0usize, 0.0);
    for group in tie_groups(scores) {
        let p = group.iter().filter(|&&i| labels[i]).count();
        tp += p;
        fp += group.len() - p;
        if p > 0 {
            area += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area)
}

/// F1 of the predictions `score >= threshold`; 0 when precision and recall
/// are both 0.
pub fn f1_at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub f1: f64,
}

pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Metrics> {
    Ok(Metrics {
        roc_auc: roc_auc(scores, labels)?,
        pr_auc: pr_auc(scores, labels)?,
        f1: f1_at_threshold(scores, labels, threshold)?,
    })
}

/// Header line plus one row: `roc_auc  pr_auc  f1`.
pub fn write_metrics_report<W: Write>(out: &mut W, m: &Metrics) -> Result<()> {
    writeln!(out, "roc_auc\tpr_auc\tf1")?;
    writeln!(out, "{:.6}\t{:.6}\t{:.6}", m.roc_auc, m.pr_auc, m.f1)?;
    Ok(())
}

/// One row per epoch. Missing values are written as `NA`.
pub fn write_history<W: Write>(out: &mut W, history: &[EpochRecord]) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    writeln!(out, "epoch\treconstruction\tprojection\tclassification\ttotal\tval_roc_auc")?;
    for r in history {
        writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{}\t{:.6}\t{}",
            r.epoch,
            r.reconstruction,
            r.projection,
            opt(r.classification),
            r.total,
            opt(r.val_roc_auc)
        )?;
    }
    Ok(())
}

/// Pearson correlation of two equally long vectors.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("correlation needs two vectors of equal length >= 2"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("correlation of a constant vector is undefined"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise Pearson matrix of the runs and the mean of its off-diagonal.
pub fn coefficient_correlation(runs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
    if runs.len() < 2 {
        return Err(Error::invalid("need at least two runs"));
    }
    let n = runs.len();
    let mut m = vec![vec![1.0; n]; n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let c = pearson(&runs[i], &runs[j])?;
            m[i][j] = c;
            m[j][i] = c;
            sum += 2.0 * c;
        }
    }
    Ok((m, sum / (n * (n - 1)) as f64))
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("mean of no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
