use std::path::Path;

use serde::{Deserialize, Serialize};

use super::driver::OptimizerDriver;
use super::search::{search_probe, GeneticParams, SearchConfig, SearchMethod};
use super::{FailurePolicy, ProbeError, Program};
use crate::digest::{canonical_hash, stage_seed};
use crate::ir::{extract_autophase, parse_ir, FeatureVector, AUTOPHASE_DIM};
use crate::kmeans::{self, KMeansConfig, KMeansError};

pub const PROBESET_FORMAT_VERSION: u32 = 1;

const ACTIONS: &str = include_str!("../../assets/llvm_actions_v1.txt");

/// The 124-entry LLVM action list, in action-id order.
pub fn default_pass_pool() -> Vec<String> {
    ACTIONS.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringMeta {
    pub seed: u64,
    /// One feature-space centroid per probe.
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub meta: ClusteringMeta,
    pub assignments: Vec<usize>,
}

/// Groups programs by static features into `p` non-empty clusters.
pub fn cluster_corpus(features: &[FeatureVector], p: usize, seed: u64) -> Result<Clustering, ProbeError> {
    if p == 0 {
        return Err(KMeansError::ZeroClusters.into());
    }
    if features.len() < p {
        return Err(ProbeError::TooFewPrograms {
            needed: p,
            available: features.len(),
        });
    }
    let flat: Vec<f64> = features.iter().flat_map(|f| f.values().iter().copied()).collect();
    let fit = kmeans::fit(&flat, AUTOPHASE_DIM, &KMeansConfig::new(p, seed))?;
    let mut sizes = vec![0; p];
    for &a in &fit.assignments {
        sizes[a] += 1;
    }
    Ok(Clustering {
        meta: ClusteringMeta {
            seed,
            centroids: (0..p).map(|c| fit.centroid(c).to_vec()).collect(),
            sizes,
        },
        assignments: fit.assignments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub cluster_id: usize,
    pub method: SearchMethod,
    pub score: f64,
    pub cluster_size: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub id: usize,
    pub passes: Vec<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeBuildConfig {
    pub probes: usize,
    pub length: usize,
    pub method: SearchMethod,
    pub budget: Option<usize>,
    pub seed: u64,
    pub policy: FailurePolicy,
    pub genetic: GeneticParams,
}

impl ProbeBuildConfig {
    pub fn new(probes: usize, length: usize, method: SearchMethod, seed: u64) -> Self {
        Self {
            probes,
            length,
            method,
            budget: None,
            seed,
            policy: FailurePolicy::ZeroFill,
            genetic: GeneticParams::default(),
        }
    }
}

impl Default for ProbeBuildConfig {
    fn default() -> Self {
        Self::new(100, 50, SearchMethod::Greedy, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub format_version: u32,
    pub config_hash: String,
    pub pass_pool: Vec<String>,
    pub length: usize,
    pub probes: Vec<Probe>,
    pub clustering: ClusteringMeta,
}

impl ProbeSet {
    /// A probe set built from explicit pass lists, with no clustering behind it.
    pub fn from_sequences(sequences: Vec<Vec<String>>) -> Self {
        let length = sequences.first().map_or(0, Vec::len);
        let mut pool: Vec<String> = sequences.iter().flatten().cloned().collect();
        pool.sort();
        pool.dedup();
        let probes = sequences
            .into_iter()
            .enumerate()
            .map(|(id, passes)| Probe {
                id,
                passes,
                provenance: Provenance {
                    cluster_id: id,
                    method: SearchMethod::Greedy,
                    score: 0.0,
                    cluster_size: 0,
                    evaluations: 0,
                },
            })
            .collect::<Vec<_>>();
        let mut set = ProbeSet {
            format_version: PROBESET_FORMAT_VERSION,
            config_hash: String::new(),
            pass_pool: pool,
            length,
            clustering: ClusteringMeta {
                seed: 0,
                centroids: Vec::new(),
                sizes: Vec::new(),
            },
            probes,
        };
        set.config_hash = canonical_hash(&(&set.pass_pool, &set.probes));
        set
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("probe set serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ProbeError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ProbeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Clusters the corpus and searches one probe per cluster, ordered by cluster id.
pub fn build_probe_set(
    driver: &OptimizerDriver,
    corpus: &[Program],
    pass_pool: &[String],
    cfg: &ProbeBuildConfig,
) -> Result<ProbeSet, ProbeError> {
    if pass_pool.is_empty() {
        return Err(ProbeError::EmptyPool);
    }
    if cfg.length == 0 {
        return Err(ProbeError::ZeroLength);
    }
    let features = corpus
        .iter()
        .map(|p| Ok(extract_autophase(&parse_ir(&p.text)?)))
        .collect::<Result<Vec<_>, ProbeError>>()?;
    let clustering = cluster_corpus(&features, cfg.probes, stage_seed(cfg.seed, "probe-clustering"))?;

    let mut probes = Vec::with_capacity(cfg.probes);
    for c in 0..cfg.probes {
        let members: Vec<Program> = corpus
            .iter()
            .zip(&clustering.assignments)
            .filter(|(_, &a)| a == c)
            .map(|(p, _)| p.clone())
            .collect();
        let search = SearchConfig {
            length: cfg.length,
            method: cfg.method,
            budget: cfg.budget,
            seed: stage_seed(cfg.seed, &format!("probe-search/{c}")),
            policy: cfg.policy,
            genetic: cfg.genetic.clone(),
        };
        let outcome = search_probe(driver, &members, pass_pool, &search)?;
        log::info!(
            "probe {c}: {} programs, score {:.6}, {} evaluations",
            members.len(),
            outcome.score,
            outcome.evaluations
        );
        probes.push(Probe {
            id: c,
            passes: outcome.passes,
            provenance: Provenance {
                cluster_id: c,
                method: cfg.method,
                score: outcome.score,
                cluster_size: members.len(),
                evaluations: outcome.evaluations,
            },
        });
    }

    let ids: Vec<&str> = corpus.iter().map(|p| p.id.as_str()).collect();
    Ok(ProbeSet {
        format_version: PROBESET_FORMAT_VERSION,
        config_hash: canonical_hash(&(cfg, pass_pool, ids)),
        pass_pool: pass_pool.to_vec(),
        length: cfg.length,
        probes,
        clustering: clustering.meta,
    })
}
