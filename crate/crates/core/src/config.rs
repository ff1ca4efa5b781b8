//! Run configuration shared by every subcommand.
//!
//! One document (TOML, or JSON when the file ends in `.json`) holds every knob.
//! Command-line flags are applied on top of the file; unspecified fields keep
//! their defaults. The optimizer binary is resolved as: `--optimizer` flag,
//! then `--mock-optimizer`, then `SPECTRUM_FORGE_OPT`, then
//! `optimizer.binary`, then `opt` on `PATH`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{canonical_hash, stage_seed};
use crate::eval::Metric;
use crate::ir::AUTOPHASE_DIM;
use crate::pq::PqConfig;
use crate::probe::{
    default_pass_pool, FailurePolicy, GeneticParams, OptimizerDriver, OzPipeline, PassStyle, ProbeBuildConfig,
    ReactionMode, SearchMethod,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub count: usize,
    pub length: usize,
    pub method: SearchMethod,
    pub budget: Option<usize>,
    pub policy: FailurePolicy,
    pub genetic: GeneticParams,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            count: 100,
            length: 50,
            method: SearchMethod::Greedy,
            budget: None,
            policy: FailurePolicy::ZeroFill,
            genetic: GeneticParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub binary: Option<PathBuf>,
    pub extra_args: Vec<String>,
    pub style: PassStyle,
    pub timeout_secs: f64,
    pub scratch_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub verify_determinism: bool,
    pub oz: OzPipeline,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            binary: None,
            extra_args: Vec::new(),
            style: PassStyle::Legacy,
            timeout_secs: 60.0,
            scratch_dir: None,
            cache_dir: None,
            verify_determinism: false,
            oz: OzPipeline::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PqSection {
    pub m: usize,
    pub k_star: usize,
    pub max_iters: usize,
}

impl Default for PqSection {
    fn default() -> Self {
        Self {
            m: 8,
            k_star: 256,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub policy: FailurePolicy,
    pub reaction: ReactionMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSection {
    /// Candidate passes; the bundled 124-entry action list when unset.
    pub passes: Option<Vec<String>>,
    pub policy: FailurePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub knn_k: usize,
    pub metric: Metric,
    pub key_feature: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            knn_k: 5,
            metric: Metric::Euclidean,
            key_feature: crate::eval::DEFAULT_KEY_FEATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every stage derives its own seed from this one.
    pub seed: u64,
    /// Worker thread cap; all cores when unset.
    pub jobs: Option<usize>,
    pub probes: ProbeSection,
    pub optimizer: OptimizerSection,
    pub pq: PqSection,
    pub spectrum: SpectrumSection,
    pub labels: LabelSection,
    pub eval: EvalSection,
    pub split: SplitSection,
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        };
        parsed.map_err(|message| ConfigError::Syntax {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.probes;
        if p.count == 0 {
            return Err(invalid("probes.count", "must be at least 1"));
        }
        if p.length == 0 {
            return Err(invalid("probes.length", "must be at least 1"));
        }
        if p.budget == Some(0) {
            return Err(invalid("probes.budget", "must be at least 1"));
        }
        if p.genetic.population < 2 {
            return Err(invalid("probes.genetic.population", "must be at least 2"));
        }
        if p.genetic.tournament == 0 {
            return Err(invalid("probes.genetic.tournament", "must be at least 1"));
        }
        if p.genetic.elitism >= p.genetic.population {
            return Err(invalid("probes.genetic.elitism", "must be below the population size"));
        }
        if !(self.optimizer.timeout_secs.is_finite() && self.optimizer.timeout_secs > 0.0) {
            return Err(invalid("optimizer.timeout_secs", "must be a positive number"));
        }
        if let OzPipeline::Passes(list) = &self.optimizer.oz {
            if list.is_empty() {
                return Err(invalid("optimizer.oz", "pass list is empty"));
            }
        }
        if self.pq.m == 0 || !AUTOPHASE_DIM.is_multiple_of(self.pq.m) {
            return Err(invalid("pq.m", format!("must divide {AUTOPHASE_DIM}")));
        }
        if self.pq.k_star == 0 {
            return Err(invalid("pq.k_star", "must be at least 1"));
        }
        if self.pq.max_iters == 0 {
            return Err(invalid("pq.max_iters", "must be at least 1"));
        }
        if self.labels.passes.as_ref().is_some_and(Vec::is_empty) {
            return Err(invalid("labels.passes", "pass list is empty"));
        }
        if self.eval.knn_k == 0 {
            return Err(invalid("eval.knn_k", "must be at least 1"));
        }
        if self.eval.key_feature >= AUTOPHASE_DIM {
            return Err(invalid("eval.key_feature", format!("must be below {AUTOPHASE_DIM}")));
        }
        let s = &self.split;
        if !(0.0..=1.0).contains(&s.train) || !(0.0..=1.0).contains(&s.val) || s.train + s.val > 1.0 {
            return Err(invalid("split", "fractions must lie in [0, 1] and sum to at most 1"));
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; independent of key order in the file.
    pub fn hash(&self) -> String {
        canonical_hash(self)
    }

    pub fn label_passes(&self) -> Vec<String> {
        self.labels.passes.clone().unwrap_or_else(default_pass_pool)
    }

    pub fn probe_build(&self) -> ProbeBuildConfig {
        ProbeBuildConfig {
            probes: self.probes.count,
            length: self.probes.length,
            method: self.probes.method,
            budget: self.probes.budget,
            seed: stage_seed(self.seed, "probes"),
            policy: self.probes.policy,
            genetic: self.probes.genetic.clone(),
        }
    }

    pub fn pq_config(&self) -> PqConfig {
        PqConfig {
            m: self.pq.m,
            k_star: self.pq.k_star,
            seed: stage_seed(self.seed, "pq"),
            max_iters: self.pq.max_iters,
        }
    }

    pub fn split_seed(&self) -> u64 {
        stage_seed(self.seed, "split")
    }

    /// Driver for `binary`, with every other setting from the file.
    pub fn driver(&self, binary: PathBuf) -> OptimizerDriver {
        let o = &self.optimizer;
        OptimizerDriver {
            binary,
            extra_args: o.extra_args.clone(),
            style: o.style,
            timeout: Duration::from_secs_f64(o.timeout_secs),
            scratch_dir: o.scratch_dir.clone(),
            cache_dir: o.cache_dir.clone(),
            verify_determinism: o.verify_determinism,
            oz: o.oz.clone(),
        }
    }
}
