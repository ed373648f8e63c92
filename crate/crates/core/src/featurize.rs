//! Multi-hot functional representation of compound pairs.
//!
//! Bit `i` of a pair's vector is set when substructure `i` occurs in the
//! segmentation of both compounds. Membership is by segmentation token, not by
//! substring search, so `C` does not fire inside `Cl`.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use ndarray::Array2;

use crate::corpus::PairCorpus;
use crate::error::{Error, Result};
use crate::smiles::SmilesString;
use crate::spm::Vocabulary;

/// A k-dimensional binary vector stored as its sorted set bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionalVector {
    active: Vec<usize>,
    dim: usize,
    vocab_id: Arc<str>,
}

impl FunctionalVector {
    pub fn from_active(mut active: Vec<usize>, dim: usize, vocab_id: Arc<str>) -> Result<Self> {
        active.sort_unstable();
        active.dedup();
        if active.last().is_some_and(|&i| i >= dim) {
            return Err(Error::shape(format!("bit index out of range for dimension {dim}")));
        }
        Ok(FunctionalVector { active, dim, vocab_id })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Set bit indices in ascending order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn vocab_id(&self) -> &str {
        &self.vocab_id
    }

    pub fn get(&self, i: usize) -> bool {
        self.active.binary_search(&i).is_ok()
    }

    pub fn is_zero(&self) -> bool {
        self.active.is_empty()
    }

    pub fn bits(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.dim];
        for &i in &self.active {
            out[i] = 1;
        }
        out
    }
}

/// `u_i`: the indicator of a single substructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingleHotVector {
    /// Zero-based feature index.
    pub index: usize,
    pub dimension: usize,
}

impl SingleHotVector {
    pub fn to_dense(self) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        v[self.index] = 1.0;
        v
    }
}

pub fn substructure_onehots(vocab: &Vocabulary) -> Vec<SingleHotVector> {
    let k = vocab.len();
    (0..k).map(|index| SingleHotVector { index, dimension: k }).collect()
}

/// Feature indices of the substructures present in one compound.
pub fn membership(smiles: &SmilesString, vocab: &Vocabulary) -> Vec<usize> {
    let mut idx: Vec<usize> = vocab
        .segment(&smiles.tokenize())
        .iter()
        .filter_map(|t| vocab.index_of(t))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    idx.sort_unstable();
    idx
}

/// Caches the vocabulary hash so corpora can be featurized without rehashing.
#[derive(Debug, Clone)]
pub struct Featurizer<'a> {
    vocab: &'a Vocabulary,
    vocab_id: Arc<str>,
}

impl<'a> Featurizer<'a> {
    pub fn new(vocab: &'a Vocabulary) -> Self {
        Featurizer {
            vocab,
            vocab_id: Arc::from(vocab.sha256()),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        self.vocab
    }

    pub fn pair(&self, left: &SmilesString, right: &SmilesString) -> FunctionalVector {
        let a = membership(left, self.vocab);
        let b: HashSet<usize> = membership(right, self.vocab).into_iter().collect();
        let active = a.into_iter().filter(|i| b.contains(i)).collect();
        FunctionalVector {
            active,
            dim: self.vocab.len(),
            vocab_id: self.vocab_id.clone(),
        }
    }

    /// One sparse vector per pair, in corpus order.
    pub fn corpus(&self, corpus: &PairCorpus) -> Vec<FunctionalVector> {
        corpus
            .examples()
            .iter()
            .map(|e| self.pair(&e.left, &e.right))
            .collect()
    }
}

/// Functional representation of one pair.
pub fn functional_representation(
    left: &str,
    right: &str,
    vocab: &Vocabulary,
) -> Result<FunctionalVector> {
    let left = SmilesString::parse(left)?;
    let right = SmilesString::parse(right)?;
    Ok(Featurizer::new(vocab).pair(&left, &right))
}

/// Row-major dense 0/1 matrix, one row per vector.
pub fn to_dense_matrix(vectors: &[FunctionalVector], dim: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((vectors.len(), dim));
    for (row, v) in vectors.iter().enumerate() {
        if v.dim != dim {
            return Err(Error::shape(format!("vector of dimension {} in a {dim}-column matrix", v.dim)));
        }
        for &i in &v.active {
            out[[row, i]] = 1.0;
        }
    }
    Ok(out)
}

/// Dense rows for a subset of vectors, in the order of `rows`.
pub fn gather_dense(vectors: &[FunctionalVector], rows: &[usize], dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), dim));
    for (r, &src) in rows.iter().enumerate() {
        for &i in &vectors[src].active {
            out[[r, i]] = 1.0;
        }
    }
    out
}

/// Write `pair_id<TAB>indices<TAB>label` rows (label column only when every
/// vector has one). Indices are zero-based and comma-separated.
pub fn write_feature_tsv<W: Write>(
    out: &mut W,
    vectors: &[FunctionalVector],
    labels: Option<&[bool]>,
) -> Result<()> {
    match labels {
        Some(_) => writeln!(out, "pair_id\tindices\tlabel")?,
        None => writeln!(out, "pair_id\tindices")?,
    }
    for (id, v) in vectors.iter().enumerate() {
        let idx: Vec<String> = v.active.iter().map(usize::to_string).collect();
        match labels {
            Some(y) => writeln!(out, "{id}\t{}\t{}", idx.join(","), u8::from(y[id]))?,
            None => writeln!(out, "{id}\t{}", idx.join(","))?,
        }
    }
    Ok(())
}
