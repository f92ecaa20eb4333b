//! Ontology-guided knowledge-graph entity alignment.
//!
//! Two knowledge graphs and their (shared or merged) ontology are embedded
//! jointly: TransE for relation triples, a tanh projection for the class
//! hierarchy and for entity typing, a class-conflict loss driven by a
//! precomputed conflict matrix, and a linear alignment map trained on seed
//! mappings. Prediction mixes entity and class cosine similarity and ranks
//! candidates with CSLS.

pub mod ccm;
pub mod config;
pub mod error;
pub mod ingest;
pub mod kg;
pub mod linalg;
pub mod merge;
pub mod predictor;
pub mod toy;
pub mod trainer;

pub use error::{Error, Result};
