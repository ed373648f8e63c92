//! Frequent chemical substructure mining and interpretable prediction of
//! pairwise compound interactions.
//!
//! The pipeline:
//!
//! 1. [`smiles`] tokenizes SMILES strings into atom-level tokens.
//! 2. [`spm`] mines frequent substructures by iterative pair merging.
//! 3. [`featurize`] turns a compound pair into a multi-hot vector over the
//!    substructures both compounds share.
//! 4. [`model`] embeds the vector with an auto-encoder, projects the embedding
//!    onto the embedded single-substructure basis by ridge regression, and
//!    predicts the interaction from the projection coefficients.
//! 5. [`eval`] scores predictions and coefficient stability.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod featurize;
pub mod model;
pub mod nn;
pub mod rng;
pub mod smiles;
pub mod spm;
pub mod synthetic;

pub use error::{Error, Result};
