//! Downstream metrics and embedding-space checks.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{AUTOPHASE_FEATURES, TOTAL_INSTS_INDEX};
use crate::probe::{BehaviorSpectrum, ProbeSet};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMBD";
pub const EMBEDDING_VERSION: u32 = 1;
pub const DEFAULT_KEY_FEATURE: usize = TOTAL_INSTS_INDEX;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to score")]
    Empty,
    #[error("no label for program {0}")]
    MissingLabel(String),
    #[error("program {program_id} ranks {have} passes, need {k}")]
    TooFewRanks { program_id: String, have: usize, k: usize },
    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("k must be positive")]
    ZeroK,
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed embedding file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Producer {
    BehavioralPq,
    Autophase,
    Instcount,
    External,
}

impl Producer {
    pub fn tag(self) -> &'static str {
        match self {
            Producer::BehavioralPq => "behavioral-pq",
            Producer::Autophase => "autophase",
            Producer::Instcount => "instcount",
            Producer::External => "external",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [Producer::BehavioralPq, Producer::Autophase, Producer::Instcount, Producer::External]
            .into_iter()
            .find(|p| p.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub program_ids: Vec<String>,
    pub dim: usize,
    /// `N × dim`, row-major.
    pub data: Vec<f64>,
    pub producer: Producer,
}

impl EmbeddingMatrix {
    pub fn new(program_ids: Vec<String>, dim: usize, data: Vec<f64>, producer: Producer) -> Result<Self, EvalError> {
        if data.len() != program_ids.len() * dim {
            return Err(EvalError::DimensionMismatch {
                expected: program_ids.len() * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        Ok(Self {
            program_ids,
            dim,
            data,
            producer,
        })
    }

    pub fn len(&self) -> usize {
        self.program_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.program_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows whose id satisfies `keep`, in order.
    pub fn select(&self, mut keep: impl FnMut(&str) -> bool) -> Self {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (i, id) in self.program_ids.iter().enumerate() {
            if keep(id) {
                ids.push(id.clone());
                data.extend_from_slice(self.row(i));
            }
        }
        Self {
            program_ids: ids,
            dim: self.dim,
            data,
            producer: self.producer,
        }
    }

    /// `EMBD`, version, N, E (u32 LE), producer tag and ids as
    /// length-prefixed UTF-8, then `N × E` little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(EMBEDDING_MAGIC);
        for v in [EMBEDDING_VERSION, self.len() as u32, self.dim as u32] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for s in std::iter::once(self.producer.tag()).chain(self.program_ids.iter().map(String::as_str)) {
            b.extend_from_slice(&(s.len() as u32).to_le_bytes());
            b.extend_from_slice(s.as_bytes());
        }
        for v in &self.data {
            b.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EvalError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != EMBEDDING_MAGIC {
            return Err(EvalError::Format("bad magic".into()));
        }
        let word = |r: &mut &[u8]| -> Result<u32, EvalError> {
            let mut x = [0u8; 4];
            r.read_exact(&mut x)?;
            Ok(u32::from_le_bytes(x))
        };
        let string = |r: &mut &[u8]| -> Result<String, EvalError> {
            let len = word(r)? as usize;
            if len > r.len() {
                return Err(EvalError::Format("string runs past end of file".into()));
            }
            let (s, rest) = r.split_at(len);
            *r = rest;
            String::from_utf8(s.to_vec()).map_err(|e| EvalError::Format(e.to_string()))
        };
        let version = word(&mut r)?;
        if version != EMBEDDING_VERSION {
            return Err(EvalError::Format(format!("unsupported version {version}")));
        }
        let n = word(&mut r)? as usize;
        let dim = word(&mut r)? as usize;
        let tag = string(&mut r)?;
        let producer = Producer::from_tag(&tag).ok_or_else(|| EvalError::Format(format!("unknown producer {tag}")))?;
        let ids = (0..n).map(|_| string(&mut r)).collect::<Result<Vec<_>, _>>()?;
        if r.len() != n * dim * 4 {
            return Err(EvalError::Format(format!("expected {} data bytes, found {}", n * dim * 4, r.len())));
        }
        let data = r
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::new(ids, dim, data, producer)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub program_id: String,
    pub ranked_pass_ids: Vec<usize>,
    #[serde(default)]
    pub predicted_oz: Option<f64>,
}

/// Percentage of programs whose label is among their first `k` ranked ids.
pub fn topk_accuracy(preds: &[PredictionRecord], labels: &BTreeMap<String, usize>, k: usize) -> Result<f64, EvalError> {
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let mut hits = 0usize;
    for p in preds {
        let label = labels
            .get(&p.program_id)
            .ok_or_else(|| EvalError::MissingLabel(p.program_id.clone()))?;
        if p.ranked_pass_ids.len() < k {
            return Err(EvalError::TooFewRanks {
                program_id: p.program_id.clone(),
                have: p.ranked_pass_ids.len(),
                k,
            });
        }
        if p.ranked_pass_ids[..k].contains(label) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / preds.len() as f64)
}

/// Mean absolute error between paired values.
pub fn mae(preds: &[f64], labels: &[f64]) -> Result<f64, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::DimensionMismatch {
            expected: labels.len(),
            actual: preds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(preds.iter().zip(labels).map(|(p, l)| (p - l).abs()).sum::<f64>() / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl Metric {
    /// Euclidean returns the squared distance, which orders identically.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    1.0 - dot / (na * nb)
                }
            }
        }
    }
}

/// Majority vote over the `k` nearest training rows.
///
/// Neighbors are ordered by distance, then by training index. A vote tie goes
/// to whichever tied label occurs first in that order.
pub fn knn_classify(
    train: &EmbeddingMatrix,
    train_labels: &[usize],
    test: &EmbeddingMatrix,
    k: usize,
    metric: Metric,
) -> Result<Vec<usize>, EvalError> {
    if train.is_empty() {
        return Err(EvalError::EmptyTrainingSet);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if train_labels.len() != train.len() {
        return Err(EvalError::DimensionMismatch {
            expected: train.len(),
            actual: train_labels.len(),
        });
    }
    if test.dim != train.dim {
        return Err(EvalError::DimensionMismatch {
            expected: train.dim,
            actual: test.dim,
        });
    }
    Ok((0..test.len())
        .into_par_iter()
        .map(|t| {
            let q = test.row(t);
            let mut order: Vec<(f64, usize)> = (0..train.len()).map(|i| (metric.distance(q, train.row(i)), i)).collect();
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order.truncate(k);
            // label -> (votes, rank of first occurrence)
            let mut votes: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
            for (rank, &(_, i)) in order.iter().enumerate() {
                votes.entry(train_labels[i]).or_insert((0, rank)).0 += 1;
            }
            votes
                .into_iter()
                .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
                .map(|(label, _)| label)
                .expect("at least one neighbor")
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub program_id: String,
    pub key_feature: usize,
    pub key_feature_name: String,
    pub most_reactive_probe: usize,
    pub reaction: f64,
    /// Occurrences of each top-ranked pass inside the most reactive probe.
    pub counts: Vec<(String, usize)>,
    pub total_aligned: usize,
}

/// Finds the probe with the most negative reaction at `key_feature` (lowest
/// probe id on ties) and counts how often each of `top_passes` occurs in it.
pub fn probe_alignment_report(
    spectrum: &BehaviorSpectrum,
    top_passes: &[String],
    probes: &ProbeSet,
    key_feature: usize,
) -> Result<AlignmentReport, EvalError> {
    if key_feature >= AUTOPHASE_FEATURES.len() {
        return Err(EvalError::DimensionMismatch {
            expected: AUTOPHASE_FEATURES.len(),
            actual: key_feature,
        });
    }
    if spectrum.rows.len() != probes.len() {
        return Err(EvalError::DimensionMismatch {
            expected: probes.len(),
            actual: spectrum.rows.len(),
        });
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, row) in spectrum.rows.iter().enumerate() {
        let v = row.values[key_feature];
        if v < best.1 {
            best = (i, v);
        }
    }
    let passes = probes.probes.get(best.0).map(|p| p.passes.as_slice()).unwrap_or(&[]);
    let counts: Vec<(String, usize)> = top_passes
        .iter()
        .map(|t| (t.clone(), passes.iter().filter(|p| *p == t).count()))
        .collect();
    Ok(AlignmentReport {
        program_id: spectrum.program_id.clone(),
        key_feature,
        key_feature_name: AUTOPHASE_FEATURES[key_feature].to_string(),
        most_reactive_probe: best.0,
        reaction: if best.1.is_finite() { best.1 } else { 0.0 },
        total_aligned: counts.iter().map(|c| c.1).sum(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnReport {
    pub k: usize,
    pub metric: Metric,
    pub producer: Producer,
    pub train: usize,
    pub test: usize,
    pub top1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oz_mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn: Option<KnnReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub alignment: Vec<AlignmentReport>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k:<24} {v}\n"));
        if let Some(v) = self.top1 {
            line("top-1 accuracy (%)", format!("{v:.2}"));
        }
        if let Some(v) = self.top5 {
            line("top-5 accuracy (%)", format!("{v:.2}"));
        }
        if let Some(v) = self.oz_mae {
            line("-Oz MAE (points)", format!("{v:.2}"));
        }
        if let Some(k) = &self.knn {
            line(
                &format!("knn k={} top-1 (%)", k.k),
                format!("{:.2}  [{} train / {} test, {}]", k.top1, k.train, k.test, k.producer.tag()),
            );
        }
        for a in &self.alignment {
            let passes: Vec<String> = a.counts.iter().map(|(p, n)| format!("{p}:{n}")).collect();
            line(
                &format!("align {}", a.program_id),
                format!(
                    "probe {} ({} {:+.4}) aligned {} [{}]",
                    a.most_reactive_probe,
                    a.key_feature_name,
                    a.reaction,
                    a.total_aligned,
                    passes.join(" ")
                ),
            );
        }
        out
    }
}
