//! Planted-motif synthetic data.
//!
//! Compounds are random chains of small fragments; a fraction of them carry
//! the nitro group [`MOTIF`]. A labelled pair interacts exactly when both
//! compounds carry the motif, so a model that works has to find it.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{write_pair_corpus, CorpusKind, PairCorpus, PairExample};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::smiles::SmilesString;

pub const MOTIF: &str = "[N+](=O)[O-]";

const FRAGMENTS: &[&str] = &[
    "C", "CC", "CCC", "O", "N", "C(=O)O", "c1ccccc1", "C(C)C", "OC", "N(C)C", "S(=O)(=O)", "Cl", "Br", "F",
    "C#N", "C=C", "CN", "CO",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub compounds: usize,
    /// Fraction of compounds that carry the motif.
    pub motif_rate: f64,
    pub min_fragments: usize,
    pub max_fragments: usize,
    /// Labelled pairs, half positive.
    pub labelled_pairs: usize,
    /// Unlabelled pairs, drawn from the same half-positive mixture.
    pub unlabelled_pairs: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            compounds: 400,
            motif_rate: 0.3,
            min_fragments: 3,
            max_fragments: 6,
            labelled_pairs: 2000,
            unlabelled_pairs: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub compounds: Vec<SmilesString>,
    /// `carriers[i]` is true when compound `i` contains the motif.
    pub carriers: Vec<bool>,
    pub labelled: PairCorpus,
    pub unlabelled: PairCorpus,
}

impl SyntheticData {
    /// Writes `compounds.txt`, `labelled.tsv` and `unlabelled.tsv`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut text = String::new();
        for c in &self.compounds {
            text.push_str(c.as_str());
            text.push('\n');
        }
        fs::write(dir.join("compounds.txt"), text)?;
        write_pair_corpus(dir.join("labelled.tsv"), &self.labelled)?;
        write_pair_corpus(dir.join("unlabelled.tsv"), &self.unlabelled)?;
        Ok(())
    }
}

fn compound<R: Rng>(rng: &mut R, cfg: &SyntheticConfig, carrier: bool) -> String {
    let n = rng.gen_range(cfg.min_fragments..=cfg.max_fragments);
    let mut parts: Vec<&str> = (0..n).map(|_| *FRAGMENTS.choose(rng).expect("non-empty")).collect();
    if carrier {
        let at = rng.gen_range(0..=parts.len());
        parts.insert(at, MOTIF);
    }
    parts.concat()
}

/// Draw `count` distinct unordered pairs `(i, j)`, `i != j`, accepted by `keep`.
fn distinct_pairs<R: Rng>(
    rng: &mut R,
    n: usize,
    count: usize,
    seen: &mut HashSet<(usize, usize)>,
    mut keep: impl FnMut(usize, usize) -> bool,
) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 200 * (count + 10) {
            return Err(Error::invalid("not enough distinct compound pairs for the requested sizes"));
        }
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let key = (i.min(j), i.max(j));
        if i == j || !keep(i, j) || !seen.insert(key) {
            continue;
        }
        out.push((i, j));
    }
    Ok(out)
}

pub fn generate(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    if cfg.compounds < 4 || cfg.min_fragments == 0 || cfg.min_fragments > cfg.max_fragments {
        return Err(Error::invalid("synthetic config needs at least 4 compounds and a valid fragment range"));
    }
    if !(0.0..=1.0).contains(&cfg.motif_rate) {
        return Err(Error::invalid("motif rate must be in [0, 1]"));
    }
    let mut rng = stream(seed, Stream::Synthetic);
    let carriers_wanted = ((cfg.compounds as f64 * cfg.motif_rate).round() as usize).max(2);
    let mut flags: Vec<bool> = (0..cfg.compounds).map(|i| i < carriers_wanted).collect();
    flags.shuffle(&mut rng);

    let mut seen = HashSet::new();
    let mut compounds = Vec::with_capacity(cfg.compounds);
    for &carrier in &flags {
        let mut tries = 0;
        loop {
            let text = compound(&mut rng, cfg, carrier);
            if seen.insert(text.clone()) {
                compounds.push(SmilesString::parse(&text)?);
                break;
            }
            tries += 1;
            if tries > 1000 {
                return Err(Error::invalid("could not generate enough distinct compounds"));
            }
        }
    }

    let n = compounds.len();
    let mut used = HashSet::new();
    let pos = cfg.labelled_pairs / 2;
    let neg = cfg.labelled_pairs - pos;
    let positives = distinct_pairs(&mut rng, n, pos, &mut used, |i, j| flags[i] && flags[j])?;
    let negatives = distinct_pairs(&mut rng, n, neg, &mut used, |i, j| !(flags[i] && flags[j]))?;
    let mut labelled: Vec<PairExample> = positives
        .into_iter()
        .map(|(i, j)| (i, j, true))
        .chain(negatives.into_iter().map(|(i, j)| (i, j, false)))
        .map(|(i, j, y)| PairExample::labelled(compounds[i].clone(), compounds[j].clone(), y))
        .collect();
    labelled.shuffle(&mut rng);

    // unlabelled pairs follow the same mixture as the labelled ones, without
    // overlapping them
    let upos = cfg.unlabelled_pairs / 2;
    let uneg = cfg.unlabelled_pairs - upos;
    let mut unlabelled: Vec<PairExample> = distinct_pairs(&mut rng, n, upos, &mut used, |i, j| flags[i] && flags[j])?
        .into_iter()
        .chain(distinct_pairs(&mut rng, n, uneg, &mut used, |i, j| !(flags[i] && flags[j]))?)
        .map(|(i, j)| PairExample::unlabelled(compounds[i].clone(), compounds[j].clone()))
        .collect();
    unlabelled.shuffle(&mut rng);

    Ok(SyntheticData {
        compounds,
        carriers: flags,
        labelled: PairCorpus::new(labelled, CorpusKind::Labelled)?,
        unlabelled: PairCorpus::new(unlabelled, CorpusKind::Unlabelled)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_follow_the_motif() {
        let cfg = SyntheticConfig {
            compounds: 60,
            labelled_pairs: 100,
            unlabelled_pairs: 200,
            ..Default::default()
        };
        let data = generate(&cfg, 3).unwrap();
        assert_eq!(data.compounds.len(), 60);
        assert_eq!(data.labelled.len(), 100);
        assert_eq!(data.unlabelled.len(), 200);
        let positives = data.labelled.examples().iter().filter(|e| e.label == Some(true)).count();
        assert_eq!(positives, 50);
        for e in data.labelled.examples() {
            let both = e.left.as_str().contains(MOTIF) && e.right.as_str().contains(MOTIF);
            assert_eq!(e.label, Some(both));
        }
        for (c, &f) in data.compounds.iter().zip(&data.carriers) {
            assert_eq!(c.as_str().contains(MOTIF), f);
        }
    }

    #[test]
    fn seeded() {
        let cfg = SyntheticConfig {
            compounds: 30,
            labelled_pairs: 20,
            unlabelled_pairs: 20,
            ..Default::default()
        };
        let a = generate(&cfg, 9).unwrap();
        let b = generate(&cfg, 9).unwrap();
        assert_eq!(a.compounds, b.compounds);
        assert_eq!(a.labelled, b.labelled);
        assert_ne!(a.compounds, generate(&cfg, 10).unwrap().compounds);
    }
}
