//! Corpus manifests, downstream labels, and the on-disk dataset layout.
//!
//! A dataset directory holds:
//!
//! | file | contents |
//! |------|----------|
//! | `features.jsonl` | one [`FeatureRecord`] per program |
//! | `spectra.bin` | `BSPC` header then `P × 56` little-endian `f32` per program |
//! | `spectra.index.json` | byte offset and row validity per program |
//! | `codes.jsonl` | one [`CodeRecord`] per program |
//! | `labels.jsonl` | one [`LabelRecord`] per program |
//! | `errors.jsonl` | one [`ErrorRecord`] per failed stage |
//! | `dataset.json` | counts and the configuration hash |
//!
//! Every record carries `format_version`; rows appear in manifest order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{canonical_hash, sha256};
use crate::ir::{extract_autophase, extract_instcount, instruction_count, parse_ir, ParseError, AUTOPHASE_DIM, AUTOPHASE_SCHEMA_ID};
use crate::pq::{train_codebook, Codebook, PqConfig, PqError};
use crate::probe::{compute_spectrum, BehaviorSpectrum, DriverError, FailurePolicy, OptimizerDriver, ProbeError, ProbeSet, Program, ReactionMode};

pub const FORMAT_VERSION: u32 = 1;
pub const SPECTRA_MAGIC: &[u8; 4] = b"BSPC";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate program id {0}")]
    DuplicateId(String),
    #[error("program {0} appears in more than one split")]
    SplitConflict(String),
    #[error("every candidate pass failed")]
    AllPassesFailed,
    #[error("program has no instructions")]
    ZeroInstructionProgram,
    #[error("pass list is empty")]
    EmptyPassList,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Pq(#[from] PqError),
    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },
}

impl CorpusError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
        move |source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub program_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub source_path: PathBuf,
    pub split: Split,
    pub suite: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub pipeline_config_hash: String,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(CorpusError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    std::fs::write(path, s).map_err(CorpusError::io(path))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CorpusError> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(CorpusError::io(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(CorpusError::io(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| CorpusError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Lists `.ll` files under `dir`, sorted by relative path.
pub fn list_ir_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(CorpusError::io(&d))? {
            let path = entry.map_err(CorpusError::io(&d))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "ll") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Program id for a file: its path relative to `root`, without `.ll`.
pub fn program_id_for(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, CorpusError> {
        let m = Self {
            format_version: FORMAT_VERSION,
            entries,
            pipeline_config_hash: String::new(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a manifest over every `.ll` file in `dir`. Splits are drawn
    /// from a hash of `(seed, program_id)`, so they do not depend on file order.
    pub fn scan(dir: &Path, suite: &str, fractions: [f64; 2], seed: u64) -> Result<Self, CorpusError> {
        let entries = list_ir_files(dir)?
            .into_iter()
            .map(|f| {
                let program_id = program_id_for(dir, &f);
                let h = sha256(format!("{seed}:{program_id}").as_bytes());
                let u = u64::from_le_bytes(h[..8].try_into().unwrap()) as f64 / u64::MAX as f64;
                let split = if u < fractions[0] {
                    Split::Train
                } else if u < fractions[0] + fractions[1] {
                    Split::Val
                } else {
                    Split::Test
                };
                ManifestEntry {
                    source_path: f.strip_prefix(dir).unwrap_or(&f).to_path_buf(),
                    program_id,
                    split,
                    suite: suite.to_string(),
                }
            })
            .collect();
        Self::new(entries)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.program_id.as_str()) {
                return Err(CorpusError::DuplicateId(e.program_id.clone()));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        let m: Self = read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        write_json(path, self)
    }

    /// Loads program texts; relative paths resolve against `base`.
    pub fn load_programs(&self, base: &Path) -> Result<Vec<Program>, CorpusError> {
        self.entries
            .iter()
            .map(|e| {
                let path = base.join(&e.source_path);
                let text = std::fs::read_to_string(&path).map_err(CorpusError::io(&path))?;
                Ok(Program::new(e.program_id.clone(), text))
            })
            .collect()
    }
}

fn optimized_count(out: Result<Vec<u8>, DriverError>) -> Result<u64, ProbeError> {
    Ok(instruction_count(&parse_ir(&String::from_utf8_lossy(&out?))?))
}

/// Applies each pass alone and returns the id with the largest instruction
/// reduction (lowest id on ties) together with that reduction.
pub fn label_best_pass<S: AsRef<str> + Sync>(
    driver: &OptimizerDriver,
    program: &str,
    passes: &[S],
    policy: FailurePolicy,
) -> Result<(usize, f64), CorpusError> {
    if passes.is_empty() {
        return Err(CorpusError::EmptyPassList);
    }
    let orig = instruction_count(&parse_ir(program)?) as f64;
    let outcomes: Vec<Result<u64, ProbeError>> = passes
        .par_iter()
        .map(|p| optimized_count(driver.apply_passes(program.as_bytes(), &[p.as_ref()])))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (k, r) in outcomes.into_iter().enumerate() {
        let reduction = match (r, policy) {
            (Ok(n), _) => orig - n as f64,
            (Err(e), FailurePolicy::Strict) => return Err(e.into()),
            (Err(e), FailurePolicy::ZeroFill) => {
                log::debug!("pass {} failed during labeling: {e}", passes[k].as_ref());
                continue;
            }
        };
        if best.is_none_or(|(_, b)| reduction > b) {
            best = Some((k, reduction));
        }
    }
    best.ok_or(CorpusError::AllPassesFailed)
}

/// Percentage of instructions removed by the driver's `-Oz` pipeline.
pub fn label_oz_benefit(driver: &OptimizerDriver, program: &str) -> Result<f64, CorpusError> {
    let orig = instruction_count(&parse_ir(program)?);
    if orig == 0 {
        return Err(CorpusError::ZeroInstructionProgram);
    }
    let opt = optimized_count(driver.apply_oz(program.as_bytes()))?;
    Ok(100.0 * (orig as f64 - opt as f64) / orig as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub format_version: u32,
    pub program_id: String,
    pub schema_id: String,
    pub autophase: Vec<u64>,
    pub instcount: BTreeMap<String, u64>,
    pub total_instructions: u64,
}

impl FeatureRecord {
    pub fn from_text(program_id: &str, text: &str) -> Result<Self, ParseError> {
        let m = parse_ir(text)?;
        let ic = extract_instcount(&m);
        Ok(Self {
            format_version: FORMAT_VERSION,
            program_id: program_id.to_string(),
            schema_id: AUTOPHASE_SCHEMA_ID.to_string(),
            autophase: extract_autophase(&m).counts(),
            instcount: ic.as_map(),
            total_instructions: ic.total_instructions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRecord {
    pub format_version: u32,
    pub program_id: String,
    pub m: usize,
    pub codes: Vec<Vec<u32>>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub format_version: u32,
    pub program_id: String,
    pub split: Split,
    pub instr_orig: u64,
    pub best_pass_id: Option<usize>,
    pub best_pass_reduction: Option<f64>,
    pub oz_benefit_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub program_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumIndexEntry {
    pub program_id: String,
    /// Byte offset of the first row in `spectra.bin`.
    pub offset: u64,
    pub rows: usize,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumIndex {
    pub format_version: u32,
    pub probes: usize,
    pub dim: usize,
    pub entries: Vec<SpectrumIndexEntry>,
}

const SPECTRA_HEADER_LEN: u64 = 4 + 4 * 4;

/// Serializes spectra as `BSPC`, version, P, D, N (all u32 LE), then the rows.
pub fn write_spectra(bin: &Path, index: &Path, probes: usize, spectra: &[BehaviorSpectrum]) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SPECTRA_MAGIC);
    for v in [FORMAT_VERSION, probes as u32, AUTOPHASE_DIM as u32, spectra.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut entries = Vec::with_capacity(spectra.len());
    for s in spectra {
        entries.push(SpectrumIndexEntry {
            program_id: s.program_id.clone(),
            offset: buf.len() as u64,
            rows: s.rows.len(),
            valid: s.valid.clone(),
        });
        for v in s.flat() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    std::fs::File::create(bin)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(CorpusError::io(bin))?;
    write_json(
        index,
        &SpectrumIndex {
            format_version: FORMAT_VERSION,
            probes,
            dim: AUTOPHASE_DIM,
            entries,
        },
    )
}

pub fn read_spectra(bin: &Path, index: &Path) -> Result<Vec<BehaviorSpectrum>, CorpusError> {
    let idx: SpectrumIndex = read_json(index)?;
    let mut bytes = Vec::new();
    std::fs::File::open(bin)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(CorpusError::io(bin))?;
    let bad = |message: String| CorpusError::Format {
        what: "spectra file",
        message,
    };
    if bytes.len() < SPECTRA_HEADER_LEN as usize || &bytes[..4] != SPECTRA_MAGIC {
        return Err(bad("missing BSPC header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (version, p, d, n) = (word(0), word(1), word(2), word(3));
    if version != FORMAT_VERSION as usize || d != idx.dim || p != idx.probes || n != idx.entries.len() {
        return Err(bad(format!("header (v{version}, P={p}, D={d}, N={n}) disagrees with index")));
    }
    idx.entries
        .iter()
        .map(|e| {
            let start = e.offset as usize;
            let end = start + e.rows * d * 4;
            if e.rows != p || e.valid.len() != p || end > bytes.len() {
                return Err(bad(format!("entry {} does not resolve", e.program_id)));
            }
            let flat: Vec<f64> = bytes[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Ok(BehaviorSpectrum::from_flat(e.program_id.clone(), &flat, e.valid.clone())?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub label_passes: Vec<String>,
    pub spectrum_policy: FailurePolicy,
    pub label_policy: FailurePolicy,
    pub reaction_mode: ReactionMode,
    pub pq: PqConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub format_version: u32,
    pub config_hash: String,
    pub programs: usize,
    pub probes: usize,
    pub m: usize,
    pub errors: usize,
    pub invalid_rows: usize,
}

pub const FEATURES_FILE: &str = "features.jsonl";
pub const SPECTRA_FILE: &str = "spectra.bin";
pub const SPECTRA_INDEX_FILE: &str = "spectra.index.json";
pub const CODES_FILE: &str = "codes.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const ERRORS_FILE: &str = "errors.jsonl";
pub const SUMMARY_FILE: &str = "dataset.json";

struct ProgramOutputs {
    features: Option<FeatureRecord>,
    spectrum: Option<BehaviorSpectrum>,
    label: Option<LabelRecord>,
    errors: Vec<ErrorRecord>,
}

fn process_program(
    driver: &OptimizerDriver,
    program: &Program,
    split: Split,
    probes: &ProbeSet,
    opts: &DatasetOptions,
) -> Result<ProgramOutputs, CorpusError> {
    let features = match FeatureRecord::from_text(&program.id, &program.text) {
        Ok(f) => f,
        Err(e) => {
            return Ok(ProgramOutputs {
                features: None,
                spectrum: None,
                label: None,
                errors: vec![ErrorRecord {
                    program_id: program.id.clone(),
                    stage: "parse".to_string(),
                    message: e.to_string(),
                }],
            });
        }
    };
    let mut spectrum = compute_spectrum(driver, program, probes, opts.reaction_mode, opts.spectrum_policy)?;
    // Stored as f32; round now so in-memory codes match the files.
    for r in &mut spectrum.rows {
        for v in &mut r.values {
            *v = *v as f32 as f64;
        }
    }

    let (label, label_errors) =
        label_program(driver, program, split, features.total_instructions, &opts.label_passes, opts.label_policy)?;
    Ok(ProgramOutputs {
        label: Some(label),
        features: Some(features),
        spectrum: Some(spectrum),
        errors: label_errors,
    })
}

/// Both downstream labels for one program. Label failures become error
/// records; under a strict policy driver failures abort instead.
fn label_program(
    driver: &OptimizerDriver,
    program: &Program,
    split: Split,
    instr_orig: u64,
    passes: &[String],
    policy: FailurePolicy,
) -> Result<(LabelRecord, Vec<ErrorRecord>), CorpusError> {
    let strict = policy == FailurePolicy::Strict;
    let mut errors = Vec::new();
    let mut note = |stage: &str, e: CorpusError| {
        errors.push(ErrorRecord {
            program_id: program.id.clone(),
            stage: stage.to_string(),
            message: e.to_string(),
        })
    };
    let best = match label_best_pass(driver, &program.text, passes, policy) {
        Ok(b) => Some(b),
        Err(e) if strict => return Err(e),
        Err(e) => {
            note("best-pass", e);
            None
        }
    };
    let oz = match label_oz_benefit(driver, &program.text) {
        Ok(v) => Some(v),
        Err(e @ CorpusError::ZeroInstructionProgram) => {
            note("oz-benefit", e);
            None
        }
        Err(e) if strict => return Err(e),
        Err(e) => {
            note("oz-benefit", e);
            None
        }
    };
    let label = LabelRecord {
        format_version: FORMAT_VERSION,
        program_id: program.id.clone(),
        split,
        instr_orig,
        best_pass_id: best.map(|b| b.0),
        best_pass_reduction: best.map(|b| b.1),
        oz_benefit_pct: oz,
    };
    Ok((label, errors))
}

/// Valid spectrum rows of the training split, or of every program when the
/// training split has none.
pub fn codebook_training_rows(spectra: &[(Split, &BehaviorSpectrum)]) -> Vec<f64> {
    let collect = |only_train: bool| -> Vec<f64> {
        spectra
            .iter()
            .filter(|(s, _)| !only_train || *s == Split::Train)
            .flat_map(|(_, sp)| sp.rows.iter().zip(&sp.valid).filter(|(_, &v)| v).flat_map(|(r, _)| r.values.iter().copied()))
            .collect()
    };
    let train = collect(true);
    if train.is_empty() {
        collect(false)
    } else {
        train
    }
}

/// Materializes every interchange file for `manifest` into `out`.
///
/// When `codebook` is `None`, one is trained on the dataset's own spectra and
/// returned. Per-program failures go to `errors.jsonl` unless a policy is strict.
pub fn build_dataset(
    manifest: &CorpusManifest,
    base: &Path,
    probes: &ProbeSet,
    codebook: Option<Codebook>,
    driver: &OptimizerDriver,
    opts: &DatasetOptions,
    out: &Path,
) -> Result<(DatasetSummary, Option<Codebook>), CorpusError> {
    manifest.validate()?;
    std::fs::create_dir_all(out).map_err(CorpusError::io(out))?;
    let programs = manifest.load_programs(base)?;
    let results = programs
        .par_iter()
        .zip(&manifest.entries)
        .map(|(p, e)| process_program(driver, p, e.split, probes, opts))
        .collect::<Result<Vec<_>, _>>()?;

    let spectra: Vec<(Split, &BehaviorSpectrum)> = results
        .iter()
        .zip(&manifest.entries)
        .filter_map(|(r, e)| r.spectrum.as_ref().map(|s| (e.split, s)))
        .collect();
    let codebook = match codebook {
        Some(cb) => Some(cb),
        None => {
            let rows = codebook_training_rows(&spectra);
            if rows.is_empty() {
                None
            } else {
                Some(train_codebook(&rows, AUTOPHASE_DIM, &opts.pq)?)
            }
        }
    };
    let codes: Vec<CodeRecord> = match &codebook {
        Some(cb) => spectra
            .iter()
            .map(|(_, s)| {
                let seq = cb.encode_spectrum(s)?;
                Ok(CodeRecord {
                    format_version: FORMAT_VERSION,
                    program_id: seq.program_id,
                    m: cb.m,
                    codes: seq.codes.into_iter().map(|c| c.ids).collect(),
                    valid: seq.valid,
                })
            })
            .collect::<Result<_, PqError>>()?,
        None => Vec::new(),
    };

    let features: Vec<&FeatureRecord> = results.iter().filter_map(|r| r.features.as_ref()).collect();
    let labels: Vec<&LabelRecord> = results.iter().filter_map(|r| r.label.as_ref()).collect();
    let errors: Vec<&ErrorRecord> = results.iter().flat_map(|r| &r.errors).collect();
    let spectra_only: Vec<BehaviorSpectrum> = spectra.iter().map(|(_, s)| (*s).clone()).collect();

    write_jsonl(&out.join(FEATURES_FILE), &features)?;
    write_spectra(&out.join(SPECTRA_FILE), &out.join(SPECTRA_INDEX_FILE), probes.len(), &spectra_only)?;
    write_jsonl(&out.join(CODES_FILE), &codes)?;
    write_jsonl(&out.join(LABELS_FILE), &labels)?;
    write_jsonl(&out.join(ERRORS_FILE), &errors)?;

    let summary = DatasetSummary {
        format_version: FORMAT_VERSION,
        config_hash: canonical_hash(&(
            opts,
            &probes.config_hash,
            codebook.as_ref().map(|c| hex::encode(sha256(&c.to_bytes()))),
            manifest,
        )),
        programs: features.len(),
        probes: probes.len(),
        m: codebook.as_ref().map_or(opts.pq.m, |c| c.m),
        errors: errors.len(),
        invalid_rows: spectra_only.iter().map(|s| s.valid.iter().filter(|v| !**v).count()).sum(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok((summary, codebook))
}

/// Re-derives labels for `manifest` with `driver` (typically backed by the
/// cache that produced them) and returns the records in manifest order.
pub fn recompute_labels(
    manifest: &CorpusManifest,
    base: &Path,
    driver: &OptimizerDriver,
    passes: &[String],
    policy: FailurePolicy,
) -> Result<Vec<LabelRecord>, CorpusError> {
    let programs = manifest.load_programs(base)?;
    let mut out = Vec::new();
    for (p, e) in programs.iter().zip(&manifest.entries) {
        // Unparseable programs have no labels in a built dataset either.
        let Ok(m) = parse_ir(&p.text) else { continue };
        out.push(label_program(driver, p, e.split, instruction_count(&m), passes, policy)?.0);
    }
    Ok(out)
}

/// Checks that no program id is listed under two splits across manifests.
pub fn check_split_integrity<'a>(entries: impl IntoIterator<Item = &'a ManifestEntry>) -> Result<(), CorpusError> {
    let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
    for e in entries {
        if let Some(prev) = seen.insert(&e.program_id, e.split) {
            if prev != e.split {
                return Err(CorpusError::SplitConflict(e.program_id.clone()));
            }
        }
    }
    Ok(())
}
