//! Behavioral spectra for LLVM IR programs.
//!
//! Programs are characterized by how their static features react to a set of
//! optimization probes. The reactions are product-quantized into compact
//! compositional codes and written to interchange files for downstream
//! training and evaluation.

pub mod config;
pub mod corpus;
pub mod digest;
pub mod eval;
pub mod ir;
pub mod kmeans;
pub mod mock;
pub mod pq;
pub mod probe;
