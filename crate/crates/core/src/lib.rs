//! Prototype-enhanced matching for joint extraction of temporal, causal,
//! subevent and coreference relations between event mentions.
//!
//! The pipeline: [`corpus`] loads documents and builds the label dependency
//! graph, [`textenc`] encodes text in sliding windows, [`protobank`] turns
//! example pairs into one prototype per relation label and refines them
//! with a graph convolution over the dependency graph, [`instenc`] encodes
//! every ordered event pair of a document, [`matcher`] scores pairs against
//! prototypes by negative Euclidean distance, [`trainer`] runs joint
//! training and [`evalkit`] scores predictions.

pub mod autograd;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod instenc;
pub mod matcher;
pub mod protobank;
pub mod textenc;
pub mod trainer;

pub use error::{Error, Result};
