//! Product quantization of reaction vectors.
//!
//! A `D`-dimensional vector is cut into `M` contiguous sub-vectors of width
//! `D / M`; each sub-vector is replaced by the index of its nearest centroid
//! in that subspace's table. One codebook is shared by every probe position.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{sha256, stage_seed};
use crate::kmeans::{self, distinct_rows, KMeansConfig, KMeansError};
use crate::probe::BehaviorSpectrum;

pub const CODEBOOK_MAGIC: &[u8; 4] = b"PQCB";
pub const CODEBOOK_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PqError {
    #[error("dimension {dim} is not divisible by {m} subspaces")]
    DimensionNotDivisible { dim: usize, m: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("id {id} out of range for subspace {subspace} with {size} centroids")]
    IdOutOfRange { subspace: usize, id: u32, size: usize },
    #[error("subspace count and centroids per subspace must be positive")]
    ZeroSize,
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("codebook I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed codebook file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqConfig {
    pub m: usize,
    pub k_star: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for PqConfig {
    fn default() -> Self {
        Self {
            m: 8,
            k_star: 256,
            seed: 0,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub max_iters: usize,
    /// Lloyd iterations used per subspace.
    pub iterations: Vec<usize>,
    /// SHA-256 of the training matrix (f64 little-endian, row-major).
    pub corpus_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub m: usize,
    pub dim: usize,
    /// Requested centroids per subspace.
    pub k_star: usize,
    /// Actual centroids per subspace; below `k_star` only when a subspace
    /// had fewer distinct training sub-vectors.
    pub sizes: Vec<usize>,
    /// Per subspace, `sizes[i] × d_sub` row-major.
    pub tables: Vec<Vec<f32>>,
    pub meta: TrainMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompositionalCode {
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSequence {
    pub program_id: String,
    pub codes: Vec<CompositionalCode>,
    pub valid: Vec<bool>,
}

/// Header fields mirrored into the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookSidecar {
    pub format: String,
    pub version: u32,
    pub m: usize,
    pub dim: usize,
    pub d_sub: usize,
    pub k_star: usize,
    pub sizes: Vec<usize>,
    pub seed: u64,
    pub max_iters: usize,
    pub iterations: Vec<usize>,
    pub corpus_hash: String,
    /// Number of distinct codes, as a decimal string (it can exceed 2^64).
    pub virtual_vocab: String,
    pub stored_centroids: usize,
}

fn check_shape(len: usize, dim: usize, m: usize) -> Result<usize, PqError> {
    if m == 0 || dim == 0 {
        return Err(PqError::ZeroSize);
    }
    if !dim.is_multiple_of(m) {
        return Err(PqError::DimensionNotDivisible { dim, m });
    }
    if len == 0 {
        return Err(PqError::EmptyTrainingSet);
    }
    if !len.is_multiple_of(dim) {
        return Err(PqError::DimensionMismatch {
            expected: dim,
            actual: len % dim,
        });
    }
    Ok(len / dim)
}

fn subvectors(data: &[f64], dim: usize, m: usize, i: usize) -> Vec<f64> {
    let ds = dim / m;
    data.chunks_exact(dim).flat_map(|r| r[i * ds..(i + 1) * ds].iter().copied()).collect()
}

fn corpus_hash(data: &[f64]) -> [u8; 32] {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    sha256(&bytes)
}

fn subspace_config(cfg: &PqConfig, i: usize, k: usize) -> KMeansConfig {
    KMeansConfig {
        k,
        max_iters: cfg.max_iters,
        tol: 1e-6,
        seed: stage_seed(cfg.seed, &format!("pq-subspace/{i}")),
        f32_centroids: true,
    }
}

fn effective_k(sub: &[f64], d_sub: usize, k_star: usize, i: usize) -> usize {
    let distinct = distinct_rows(sub, d_sub);
    if distinct < k_star {
        log::warn!("subspace {i}: only {distinct} distinct sub-vectors, using {distinct} centroids instead of {k_star}");
    }
    distinct.min(k_star)
}

/// Trains one K-means table per subspace over row-major `data` of width `dim`.
pub fn train_codebook(data: &[f64], dim: usize, cfg: &PqConfig) -> Result<Codebook, PqError> {
    if cfg.k_star == 0 {
        return Err(PqError::ZeroSize);
    }
    check_shape(data.len(), dim, cfg.m)?;
    let d_sub = dim / cfg.m;
    let fits = (0..cfg.m)
        .into_par_iter()
        .map(|i| {
            let sub = subvectors(data, dim, cfg.m, i);
            let k = effective_k(&sub, d_sub, cfg.k_star, i);
            kmeans::fit(&sub, d_sub, &subspace_config(cfg, i, k))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(fits, dim, cfg, corpus_hash(data)))
}

/// Trains codebooks for increasing `k_stars`, each warm-started from the
/// previous one so reconstruction error never goes up along the schedule.
pub fn train_codebook_schedule(
    data: &[f64],
    dim: usize,
    k_stars: &[usize],
    cfg: &PqConfig,
) -> Result<Vec<Codebook>, PqError> {
    let mut out: Vec<Codebook> = Vec::with_capacity(k_stars.len());
    for &k_star in k_stars {
        let step = PqConfig { k_star, ..cfg.clone() };
        let cb = match out.last() {
            None => train_codebook(data, dim, &step)?,
            Some(prev) => extend_codebook(prev, data, &step)?,
        };
        out.push(cb);
    }
    Ok(out)
}

fn extend_codebook(prev: &Codebook, data: &[f64], cfg: &PqConfig) -> Result<Codebook, PqError> {
    if cfg.k_star == 0 {
        return Err(PqError::ZeroSize);
    }
    let dim = prev.dim;
    check_shape(data.len(), dim, cfg.m)?;
    let d_sub = dim / cfg.m;
    let fits = (0..cfg.m)
        .into_par_iter()
        .map(|i| {
            let sub = subvectors(data, dim, cfg.m, i);
            let k = effective_k(&sub, d_sub, cfg.k_star, i);
            let start: Vec<f64> = prev.tables[i].iter().map(|&v| v as f64).collect();
            kmeans::fit_extending(&sub, d_sub, &start, &subspace_config(cfg, i, k))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(fits, dim, cfg, corpus_hash(data)))
}

fn assemble(fits: Vec<kmeans::KMeansFit>, dim: usize, cfg: &PqConfig, hash: [u8; 32]) -> Codebook {
    Codebook {
        m: cfg.m,
        dim,
        k_star: cfg.k_star,
        sizes: fits.iter().map(|f| f.k()).collect(),
        tables: fits
            .iter()
            .map(|f| f.centroids.iter().map(|&v| v as f32).collect())
            .collect(),
        meta: TrainMeta {
            seed: cfg.seed,
            max_iters: cfg.max_iters,
            iterations: fits.iter().map(|f| f.iterations).collect(),
            corpus_hash: hash,
        },
    }
}

impl Codebook {
    pub fn d_sub(&self) -> usize {
        self.dim / self.m
    }

    pub fn centroid(&self, subspace: usize, id: usize) -> &[f32] {
        let ds = self.d_sub();
        &self.tables[subspace][id * ds..(id + 1) * ds]
    }

    /// Count of distinct codes this codebook can emit.
    pub fn virtual_vocab(&self) -> u128 {
        self.sizes.iter().fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
    }

    pub fn stored_centroids(&self) -> usize {
        self.sizes.iter().sum()
    }

    fn nearest_in(&self, subspace: usize, sub: &[f64]) -> u32 {
        let mut best = (0usize, f64::INFINITY);
        for j in 0..self.sizes[subspace] {
            let d: f64 = self
                .centroid(subspace, j)
                .iter()
                .zip(sub)
                .map(|(&c, &x)| (x - c as f64) * (x - c as f64))
                .sum();
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0 as u32
    }

    /// Nearest centroid per subspace; ties go to the lowest id.
    pub fn encode(&self, d: &[f64]) -> Result<CompositionalCode, PqError> {
        if d.len() != self.dim {
            return Err(PqError::DimensionMismatch {
                expected: self.dim,
                actual: d.len(),
            });
        }
        let ds = self.d_sub();
        Ok(CompositionalCode {
            ids: (0..self.m).map(|i| self.nearest_in(i, &d[i * ds..(i + 1) * ds])).collect(),
        })
    }

    /// Concatenation of the selected centroids.
    pub fn decode(&self, c: &CompositionalCode) -> Result<Vec<f64>, PqError> {
        if c.ids.len() != self.m {
            return Err(PqError::DimensionMismatch {
                expected: self.m,
                actual: c.ids.len(),
            });
        }
        let mut out = Vec::with_capacity(self.dim);
        for (i, &id) in c.ids.iter().enumerate() {
            if id as usize >= self.sizes[i] {
                return Err(PqError::IdOutOfRange {
                    subspace: i,
                    id,
                    size: self.sizes[i],
                });
            }
            out.extend(self.centroid(i, id as usize).iter().map(|&v| v as f64));
        }
        Ok(out)
    }

    pub fn encode_spectrum(&self, s: &BehaviorSpectrum) -> Result<CodeSequence, PqError> {
        let codes = s
            .rows
            .par_iter()
            .map(|r| self.encode(&r.values))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CodeSequence {
            program_id: s.program_id.clone(),
            codes,
            valid: s.valid.clone(),
        })
    }

    /// Mean over rows of the squared reconstruction error.
    pub fn quantization_error(&self, data: &[f64]) -> Result<f64, PqError> {
        let n = check_shape(data.len(), self.dim, self.m)?;
        let total: f64 = data
            .par_chunks_exact(self.dim)
            .map(|row| {
                let rec = self.decode(&self.encode(row)?)?;
                Ok(row.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            })
            .collect::<Result<Vec<f64>, PqError>>()?
            .iter()
            .sum();
        Ok(total / n as f64)
    }

    pub fn sidecar(&self) -> CodebookSidecar {
        CodebookSidecar {
            format: "pq-codebook".to_string(),
            version: CODEBOOK_VERSION,
            m: self.m,
            dim: self.dim,
            d_sub: self.d_sub(),
            k_star: self.k_star,
            sizes: self.sizes.clone(),
            seed: self.meta.seed,
            max_iters: self.meta.max_iters,
            iterations: self.meta.iterations.clone(),
            corpus_hash: hex::encode(self.meta.corpus_hash),
            virtual_vocab: self.virtual_vocab().to_string(),
            stored_centroids: self.stored_centroids(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CODEBOOK_MAGIC);
        for v in [CODEBOOK_VERSION, self.m as u32, self.dim as u32, self.k_star as u32, self.meta.max_iters as u32] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&self.meta.seed.to_le_bytes());
        b.extend_from_slice(&self.meta.corpus_hash);
        for &s in &self.sizes {
            b.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &it in &self.meta.iterations {
            b.extend_from_slice(&(it as u32).to_le_bytes());
        }
        for t in &self.tables {
            for v in t {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CODEBOOK_MAGIC {
            return Err(PqError::Format("bad magic".into()));
        }
        let u32_at = |r: &mut &[u8]| -> Result<u32, PqError> {
            let mut x = [0u8; 4];
            r.read_exact(&mut x)?;
            Ok(u32::from_le_bytes(x))
        };
        let version = u32_at(&mut r)?;
        if version != CODEBOOK_VERSION {
            return Err(PqError::Format(format!("unsupported version {version}")));
        }
        let m = u32_at(&mut r)? as usize;
        let dim = u32_at(&mut r)? as usize;
        let k_star = u32_at(&mut r)? as usize;
        let max_iters = u32_at(&mut r)? as usize;
        if m == 0 || !dim.is_multiple_of(m) {
            return Err(PqError::Format(format!("inconsistent shape M={m} D={dim}")));
        }
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let mut corpus_hash = [0u8; 32];
        r.read_exact(&mut corpus_hash)?;
        let sizes = (0..m).map(|_| Ok(u32_at(&mut r)? as usize)).collect::<Result<Vec<_>, PqError>>()?;
        let iterations = (0..m).map(|_| Ok(u32_at(&mut r)? as usize)).collect::<Result<Vec<_>, PqError>>()?;
        let d_sub = dim / m;
        let mut tables = Vec::with_capacity(m);
        for &s in &sizes {
            if s == 0 || s > k_star {
                return Err(PqError::Format(format!("subspace size {s} outside 1..={k_star}")));
            }
            let mut t = Vec::with_capacity(s * d_sub);
            for _ in 0..s * d_sub {
                let mut x = [0u8; 4];
                r.read_exact(&mut x)?;
                let v = f32::from_le_bytes(x);
                if !v.is_finite() {
                    return Err(PqError::Format("non-finite centroid".into()));
                }
                t.push(v);
            }
            tables.push(t);
        }
        if !r.is_empty() {
            return Err(PqError::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(Codebook {
            m,
            dim,
            k_star,
            sizes,
            tables,
            meta: TrainMeta {
                seed: u64::from_le_bytes(seed),
                max_iters,
                iterations,
                corpus_hash,
            },
        })
    }

    /// Writes the binary file and a `.json` sidecar next to it.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), PqError> {
        let path = path.as_ref();
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        let mut side = serde_json::to_string_pretty(&self.sidecar()).expect("sidecar serializes");
        side.push('\n');
        std::fs::write(sidecar_path(path), side)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, PqError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Codebook {
        Codebook {
            m: 2,
            dim: 4,
            k_star: 2,
            sizes: vec![2, 2],
            tables: vec![vec![0.0, 0.0, 1.0, 1.0], vec![5.0, 5.0, -1.0, 2.0]],
            meta: TrainMeta {
                seed: 3,
                max_iters: 100,
                iterations: vec![1, 1],
                corpus_hash: [7; 32],
            },
        }
    }

    #[test]
    fn encode_decode_exact_points() {
        let cb = tiny();
        let d = [1.0, 1.0, 5.0, 5.0];
        let c = cb.encode(&d).unwrap();
        assert_eq!(c.ids, vec![1, 0]);
        assert_eq!(cb.decode(&c).unwrap(), d.to_vec());
    }

    #[test]
    fn binary_round_trip() {
        let cb = tiny();
        assert_eq!(Codebook::from_bytes(&cb.to_bytes()).unwrap(), cb);
        let mut bad = cb.to_bytes();
        bad[0] = b'X';
        assert!(Codebook::from_bytes(&bad).is_err());
        assert!(Codebook::from_bytes(&cb.to_bytes()[..40]).is_err());
    }

    #[test]
    fn out_of_range_id() {
        assert!(matches!(
            tiny().decode(&CompositionalCode { ids: vec![0, 2] }),
            Err(PqError::IdOutOfRange { subspace: 1, id: 2, size: 2 })
        ));
    }

    #[test]
    fn shape_errors() {
        let cfg = PqConfig { m: 3, k_star: 2, ..PqConfig::default() };
        assert!(matches!(
            train_codebook(&[0.0; 8], 4, &cfg),
            Err(PqError::DimensionNotDivisible { dim: 4, m: 3 })
        ));
        let cfg = PqConfig { m: 2, k_star: 2, ..PqConfig::default() };
        assert!(matches!(train_codebook(&[], 4, &cfg), Err(PqError::EmptyTrainingSet)));
    }

    #[test]
    fn k_star_reduced_to_distinct() {
        let data = [1.0, 2.0, 1.0, 2.0, 3.0, 4.0];
        let cfg = PqConfig { m: 1, k_star: 5, ..PqConfig::default() };
        let cb = train_codebook(&data, 2, &cfg).unwrap();
        assert_eq!(cb.sizes, vec![2]);
        assert_eq!(cb.quantization_error(&data).unwrap(), 0.0);
    }

    #[test]
    fn default_vocabulary_accounting() {
        let cb = Codebook {
            m: 8,
            dim: 56,
            k_star: 256,
            sizes: vec![256; 8],
            tables: vec![vec![0.0; 256 * 7]; 8],
            meta: tiny().meta,
        };
        assert_eq!(cb.virtual_vocab(), 1u128 << 64);
        assert_eq!(cb.stored_centroids(), 2048);
        assert_eq!(cb.sidecar().virtual_vocab, "18446744073709551616");
    }
}
