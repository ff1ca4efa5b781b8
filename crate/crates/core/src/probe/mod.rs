//! Optimization probes and behavioral spectra.

pub mod driver;
mod probeset;
mod reaction;
mod search;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{extract_autophase, parse_ir, ParseError, AUTOPHASE_DIM};
use crate::kmeans::KMeansError;

pub use driver::{DriverError, OptimizerDriver, OzPipeline, PassStyle, OPTIMIZER_ENV};
pub use probeset::{
    build_probe_set, cluster_corpus, default_pass_pool, Clustering, ClusteringMeta, Probe, ProbeBuildConfig,
    ProbeSet, Provenance, PROBESET_FORMAT_VERSION,
};
pub use reaction::{log_relative, reaction, ReactionMode};
pub use search::{search_probe, Evaluator, GeneticParams, SearchConfig, SearchMethod, SearchOutcome};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("need at least {needed} programs, have {available}")]
    TooFewPrograms { needed: usize, available: usize },
    #[error("pass pool is empty")]
    EmptyPool,
    #[error("cluster has no programs")]
    EmptyCluster,
    #[error("probe length must be positive")]
    ZeroLength,
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("probe set I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("probe set format: {0}")]
    Format(#[from] serde_json::Error),
}

/// A program as seen by the probe engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub id: String,
    pub text: String,
}

impl Program {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

/// What to do when the optimizer fails on a (program, probe) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Record a zero row and clear its validity bit.
    #[default]
    ZeroFill,
    /// Abort with the driver error.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionVector {
    pub probe_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorSpectrum {
    pub program_id: String,
    pub rows: Vec<ReactionVector>,
    /// `valid[i]` is false when probe `i` failed and its row was zero-filled.
    pub valid: Vec<bool>,
}

impl BehaviorSpectrum {
    pub fn probes(&self) -> usize {
        self.rows.len()
    }

    /// Row-major `P × 56` values.
    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.values.iter().copied()).collect()
    }

    pub fn from_flat(program_id: impl Into<String>, flat: &[f64], valid: Vec<bool>) -> Result<Self, ProbeError> {
        if flat.len() != valid.len() * AUTOPHASE_DIM {
            return Err(ProbeError::DimensionMismatch {
                expected: valid.len() * AUTOPHASE_DIM,
                actual: flat.len(),
            });
        }
        Ok(Self {
            program_id: program_id.into(),
            rows: flat
                .chunks(AUTOPHASE_DIM)
                .enumerate()
                .map(|(probe_id, v)| ReactionVector {
                    probe_id,
                    values: v.to_vec(),
                })
                .collect(),
            valid,
        })
    }
}

/// Applies every probe to `program` and records the feature reactions.
pub fn compute_spectrum(
    driver: &OptimizerDriver,
    program: &Program,
    probes: &ProbeSet,
    mode: ReactionMode,
    policy: FailurePolicy,
) -> Result<BehaviorSpectrum, ProbeError> {
    let orig = extract_autophase(&parse_ir(&program.text)?);
    let rows: Vec<Result<Vec<f64>, ProbeError>> = probes
        .probes
        .par_iter()
        .map(|probe| {
            let out = driver.apply_passes(program.text.as_bytes(), &probe.passes)?;
            let opt = extract_autophase(&parse_ir(&String::from_utf8_lossy(&out))?);
            reaction(orig.values(), opt.values(), mode)
        })
        .collect();

    let mut spectrum = BehaviorSpectrum {
        program_id: program.id.clone(),
        rows: Vec::with_capacity(rows.len()),
        valid: Vec::with_capacity(rows.len()),
    };
    for (probe_id, row) in rows.into_iter().enumerate() {
        let (values, ok) = match (row, policy) {
            (Ok(v), _) => (v, true),
            (Err(e), FailurePolicy::Strict) => return Err(e),
            (Err(e), FailurePolicy::ZeroFill) => {
                log::warn!("program {} probe {probe_id} failed, row zero-filled: {e}", program.id);
                (vec![0.0; AUTOPHASE_DIM], false)
            }
        };
        spectrum.rows.push(ReactionVector { probe_id, values });
        spectrum.valid.push(ok);
    }
    Ok(spectrum)
}
