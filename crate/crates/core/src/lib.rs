//! Coverage-augmented uncertainty for probabilistic knowledge-graph embeddings.
//!
//! Entities are embedded as diagonal Gaussians. A triple's uncertainty is split
//! into a *semantic* part (mean embedding variance of its endpoints, which only
//! knows about entities) and a *structural* part (whether each endpoint was ever
//! observed with the query relation in training). The two are mixed with a
//! single weight fit on validation data.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, configuration and
//! the command line live in the `cagp` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coverage;
pub mod embed;
mod error;
pub mod eval;
pub mod graph;
pub mod oodgen;
pub mod uncertainty;
pub mod verify;

pub use coverage::{CoverageMatrix, CoverageMode};
pub use embed::{GaussianEmbeddingModel, Optimizer, ScorerKind, TrainConfig};
pub use error::{Error, Result};
pub use graph::{EntityId, KnowledgeGraph, RelationId, Split, ThresholdBasis, Triple};
pub use oodgen::{OodClass, OodPartition};
pub use uncertainty::{MixingWeight, SemanticNormalizer, UncertaintyAssessment};
