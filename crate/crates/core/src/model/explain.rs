use log::warn;

use super::CasterModel;
use crate::error::Result;
use crate::featurize::{Featurizer, FunctionalVector};
use crate::smiles::SmilesString;
use crate::spm::Vocabulary;

/// Predicted probability of a pair and the magnified coefficients of the
/// substructures the pair shares, largest magnitude first.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub probability: f64,
    pub entries: Vec<(String, f64)>,
}

impl CasterModel {
    pub fn explain(&self, left: &SmilesString, right: &SmilesString, vocab: &Vocabulary) -> Result<Explanation> {
        let x = Featurizer::new(vocab).pair(left, right);
        self.explain_vector(&x, vocab)
    }

    pub fn explain_vector(&self, x: &FunctionalVector, vocab: &Vocabulary) -> Result<Explanation> {
        let coefficients = self.coefficients(x)?;
        let probability = self.predict_probability(&coefficients)?;
        if x.is_zero() {
            warn!("the pair shares no substructure, nothing to explain");
        }
        let magnified = coefficients.magnified();
        let mut entries: Vec<(String, f64)> = x
            .active()
            .iter()
            .map(|&i| (vocab.substructure(i).expect("index within vocabulary").to_string(), magnified[i]))
            .collect();
        entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        Ok(Explanation { probability, entries })
    }
}
