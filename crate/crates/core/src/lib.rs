//! Modular RDF-to-text generation: discourse ordering, text structuring,
//! lexicalization, referring expression generation and realization, plus an
//! end-to-end mode and evaluation.

pub mod corpus;
pub mod engine;
pub mod eval;
pub mod experiments;
pub mod error;
pub mod lexicalization;
pub mod ordering;
pub mod pipeline;
pub mod records;
pub mod realization;
pub mod reg;
pub mod structuring;
pub mod text;

pub use error::{Error, Result};
