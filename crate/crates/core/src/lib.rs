//! Triple embeddings from pre-trained knowledge graph embeddings.
//!
//! The crate covers the whole experiment:
//!
//! * [`kg`] loads triple files and computes topology statistics.
//! * [`seed`] scores and trains (or imports) entity/predicate embeddings.
//! * [`sampler`] draws candidate triple pairs and labels them with the
//!   pairwise triple similarity score (PTSS).
//! * [`siamese`] fine-tunes a triple embedding layer against those labels.
//! * [`eval`] runs triple classification and clusterability measurements.
//! * [`triple2vec`] is the line-graph random-walk baseline.
//! * [`pipeline`] wires the stages together behind a config file and a
//!   checksummed run manifest.

pub mod error;
pub mod eval;
pub mod kg;
pub mod linalg;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod seed;
pub mod siamese;
pub mod triple2vec;

pub use error::{Error, Result};
pub use kg::{GraphStats, KnowledgeGraph, Triple};
pub use linalg::Matrix;
pub use sampler::{Provenance, PtssDataset, PtssPair};
pub use seed::{EmbeddingSet, ModelTag, ValueKind};
pub use siamese::{AggregationOp, FineTuneConfig, SiameseModel};
