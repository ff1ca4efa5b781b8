use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spectrum_forge::config::RunConfig;
use spectrum_forge::corpus::{
    self, build_dataset, read_jsonl, read_spectra, write_spectra, CodeRecord, CorpusManifest, DatasetOptions,
    ErrorRecord, FeatureRecord, LabelRecord, Split,
};
use spectrum_forge::eval::{self, EmbeddingMatrix, EvalReport, KnnReport, PredictionRecord, Producer};
use spectrum_forge::ir::{Opcode, AUTOPHASE_DIM};
use spectrum_forge::pq::{train_codebook, Codebook, CompositionalCode};
use spectrum_forge::probe::{
    build_probe_set, compute_spectrum, FailurePolicy, OptimizerDriver, ProbeSet, Program, SearchMethod, OPTIMIZER_ENV,
};

#[derive(Parser)]
#[command(name = "spectrum-forge", version, about = "Behavioral spectra and product-quantized codes for LLVM IR")]
struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Optimizer binary (overrides the environment and the config file).
    #[arg(long, global = true)]
    optimizer: Option<PathBuf>,
    /// Use the bundled deterministic mock optimizer.
    #[arg(long, global = true)]
    mock_optimizer: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Abort on the first optimizer failure instead of zero-filling.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    budget: Option<usize>,
    /// Per-invocation optimizer timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct PqArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k_star: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Greedy,
    Genetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbeddingKind {
    Autophase,
    Instcount,
    Codes,
}

#[derive(Subcommand)]
enum Command {
    /// Extract static features from `.ll` files or directories.
    Features {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a manifest listing every `.ll` file under a directory.
    Manifest {
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "default")]
        suite: String,
    },
    /// Cluster the training programs and search one probe per cluster.
    BuildProbes {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        probe: ProbeArgs,
    },
    /// Compute behavioral spectra for every program in a manifest.
    Spectrum {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        probes: PathBuf,
        /// Directory receiving spectra.bin and spectra.index.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timeout: Option<f64>,
    },
    /// Train a product-quantization codebook on stored spectra.
    TrainCodebook {
        #[arg(long)]
        spectra: PathBuf,
        /// Restrict training to this manifest's train split.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pq: PqArgs,
    },
    /// Encode stored spectra with a codebook.
    Encode {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        spectra: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute best-pass and -Oz labels.
    Labels {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        timeout: Option<f64>,
    },
    /// Run the full pipeline into a dataset directory.
    Dataset {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Existing probe set; built from the manifest when absent.
        #[arg(long = "probe-set")]
        probe_set: Option<PathBuf>,
        /// Existing codebook; trained on the dataset when absent.
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[command(flatten)]
        probe: ProbeArgs,
        #[command(flatten)]
        pq: PqArgs,
    },
    /// Score predictions and embeddings against labels.
    Eval {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Dataset directory with spectra, used for the alignment report.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        probes: Option<PathBuf>,
        #[arg(long)]
        knn_k: Option<usize>,
        #[arg(long)]
        key_feature: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write an embedding matrix built from a dataset directory.
    ExportEmbeddings {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        kind: EmbeddingKind,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Ctx {
    cfg: RunConfig,
    optimizer: Option<PathBuf>,
    mock: bool,
}

impl Ctx {
    fn driver(&self) -> Result<OptimizerDriver> {
        let binary = if let Some(b) = &self.optimizer {
            b.clone()
        } else if self.mock {
            mock_binary()?
        } else if let Some(b) = std::env::var_os(OPTIMIZER_ENV) {
            PathBuf::from(b)
        } else if let Some(b) = &self.cfg.optimizer.binary {
            b.clone()
        } else {
            PathBuf::from("opt")
        };
        Ok(self.cfg.driver(binary))
    }
}

fn mock_binary() -> Result<PathBuf> {
    let exe = std::env::current_exe().context("locating the current executable")?;
    let name = format!("mock-opt{}", std::env::consts::EXE_SUFFIX);
    exe.ancestors()
        .skip(1)
        .take(2)
        .map(|d| d.join(&name))
        .find(|p| p.is_file())
        .with_context(|| format!("bundled {name} not found next to {}", exe.display()))
}

fn apply_probe_args(cfg: &mut RunConfig, a: &ProbeArgs) {
    if let Some(v) = a.probes {
        cfg.probes.count = v;
    }
    if let Some(v) = a.length {
        cfg.probes.length = v;
    }
    if let Some(m) = a.method {
        cfg.probes.method = match m {
            MethodArg::Greedy => SearchMethod::Greedy,
            MethodArg::Genetic => SearchMethod::Genetic,
        };
    }
    if a.budget.is_some() {
        cfg.probes.budget = a.budget;
    }
    if let Some(t) = a.timeout {
        cfg.optimizer.timeout_secs = t;
    }
}

fn apply_pq_args(cfg: &mut RunConfig, a: &PqArgs) {
    if let Some(m) = a.m {
        cfg.pq.m = m;
    }
    if let Some(k) = a.k_star {
        cfg.pq.k_star = k;
    }
}

fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_manifest(path: &Path) -> Result<(CorpusManifest, Vec<Program>)> {
    let manifest = CorpusManifest::read(path)?;
    let programs = manifest.load_programs(&manifest_base(path))?;
    Ok((manifest, programs))
}

/// Training-split programs, or all of them when nothing is marked train.
fn probe_corpus(manifest: &CorpusManifest, programs: &[Program]) -> Vec<Program> {
    let train: Vec<Program> = programs
        .iter()
        .zip(&manifest.entries)
        .filter(|(_, e)| e.split == Split::Train)
        .map(|(p, _)| p.clone())
        .collect();
    if train.is_empty() {
        log::warn!("manifest has no training programs; building probes from the whole corpus");
        programs.to_vec()
    } else {
        train
    }
}

fn build_probes(ctx: &Ctx, manifest: &CorpusManifest, programs: &[Program]) -> Result<ProbeSet> {
    let corpus = probe_corpus(manifest, programs);
    let driver = ctx.driver()?;
    Ok(build_probe_set(&driver, &corpus, &ctx.cfg.label_passes(), &ctx.cfg.probe_build())?)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn cmd_features(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for input in inputs {
        if input.is_dir() {
            for f in corpus::list_ir_files(input)? {
                files.push((corpus::program_id_for(input, &f), f));
            }
        } else if input.is_file() {
            let id = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            files.push((id, input.clone()));
        } else {
            bail!("input not found: {}", input.display());
        }
    }
    let records = files
        .iter()
        .map(|(id, f)| {
            let text = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
            FeatureRecord::from_text(id, &text).with_context(|| format!("parsing {}", f.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(out, &records)?;
    eprintln!("{} programs -> {}", records.len(), out.display());
    Ok(())
}

fn dataset_options(cfg: &RunConfig) -> DatasetOptions {
    DatasetOptions {
        label_passes: cfg.label_passes(),
        spectrum_policy: cfg.spectrum.policy,
        label_policy: cfg.labels.policy,
        reaction_mode: cfg.spectrum.reaction,
        pq: cfg.pq_config(),
    }
}

fn cmd_eval(
    ctx: &Ctx,
    labels: &Path,
    predictions: Option<&Path>,
    embeddings: Option<&Path>,
    dataset: Option<&Path>,
    probes: Option<&Path>,
    report_path: Option<&Path>,
) -> Result<()> {
    let labels: Vec<LabelRecord> = read_jsonl(labels)?;
    let best: BTreeMap<String, usize> = labels
        .iter()
        .filter_map(|l| l.best_pass_id.map(|b| (l.program_id.clone(), b)))
        .collect();
    let mut report = EvalReport::default();

    if let Some(p) = predictions {
        let preds: Vec<PredictionRecord> = read_jsonl(p)?;
        report.top1 = Some(eval::topk_accuracy(&preds, &best, 1)?);
        report.top5 = Some(eval::topk_accuracy(&preds, &best, 5)?);
        let oz: BTreeMap<&str, f64> = labels
            .iter()
            .filter_map(|l| l.oz_benefit_pct.map(|v| (l.program_id.as_str(), v)))
            .collect();
        let pairs: Vec<(f64, f64)> = preds
            .iter()
            .filter_map(|p| Some((p.predicted_oz?, *oz.get(p.program_id.as_str())?)))
            .collect();
        if !pairs.is_empty() {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            report.oz_mae = Some(eval::mae(&a, &b)?);
        }
        if let (Some(dir), Some(probes)) = (dataset, probes) {
            let probes = ProbeSet::read(probes)?;
            let spectra = read_spectra(&dir.join(corpus::SPECTRA_FILE), &dir.join(corpus::SPECTRA_INDEX_FILE))?;
            let by_id: BTreeMap<&str, &PredictionRecord> = preds.iter().map(|p| (p.program_id.as_str(), p)).collect();
            for s in &spectra {
                let Some(p) = by_id.get(s.program_id.as_str()) else { continue };
                let top: Vec<String> = p
                    .ranked_pass_ids
                    .iter()
                    .take(5)
                    .filter_map(|&i| label_pass_name(ctx, i))
                    .collect();
                report
                    .alignment
                    .push(eval::probe_alignment_report(s, &top, &probes, ctx.cfg.eval.key_feature)?);
            }
        }
    }

    if let Some(e) = embeddings {
        let emb = EmbeddingMatrix::read(e)?;
        let split: BTreeMap<&str, Split> = labels.iter().map(|l| (l.program_id.as_str(), l.split)).collect();
        let labeled_in = |want_train: bool| {
            let (split, best) = (&split, &best);
            move |id: &str| split.get(id).is_some_and(|s| (*s == Split::Train) == want_train) && best.contains_key(id)
        };
        // everything outside the train split is scored
        let train = emb.select(labeled_in(true));
        let test = emb.select(labeled_in(false));
        let train_labels: Vec<usize> = train.program_ids.iter().map(|id| best[id]).collect();
        let predicted = eval::knn_classify(&train, &train_labels, &test, ctx.cfg.eval.knn_k, ctx.cfg.eval.metric)?;
        let hits = predicted
            .iter()
            .zip(&test.program_ids)
            .filter(|(p, id)| best[id.as_str()] == **p)
            .count();
        report.knn = Some(KnnReport {
            k: ctx.cfg.eval.knn_k,
            metric: ctx.cfg.eval.metric,
            producer: emb.producer,
            train: train.len(),
            test: test.len(),
            top1: if test.is_empty() { 0.0 } else { 100.0 * hits as f64 / test.len() as f64 },
        });
    }

    print!("{}", report.to_table());
    if let Some(path) = report_path {
        let mut s = serde_json::to_string_pretty(&report)?;
        s.push('\n');
        std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn label_pass_name(ctx: &Ctx, id: usize) -> Option<String> {
    ctx.cfg.label_passes().get(id).cloned()
}

fn cmd_export(dir: &Path, kind: EmbeddingKind, out: &Path) -> Result<()> {
    let matrix = match kind {
        EmbeddingKind::Autophase | EmbeddingKind::Instcount => {
            let features: Vec<FeatureRecord> = read_jsonl(&dir.join(corpus::FEATURES_FILE))?;
            let ids = features.iter().map(|f| f.program_id.clone()).collect();
            let (dim, data, producer) = if matches!(kind, EmbeddingKind::Autophase) {
                let data = features.iter().flat_map(|f| f.autophase.iter().map(|&v| v as f64)).collect();
                (AUTOPHASE_DIM, data, Producer::Autophase)
            } else {
                let data = features
                    .iter()
                    .flat_map(|f| Opcode::ALL.iter().map(|op| f.instcount.get(op.as_str()).copied().unwrap_or(0) as f64))
                    .collect();
                (Opcode::ALL.len(), data, Producer::Instcount)
            };
            EmbeddingMatrix::new(ids, dim, data, producer)?
        }
        EmbeddingKind::Codes => {
            let cb = Codebook::read(dir.join("codebook.pqcb"))?;
            let codes: Vec<CodeRecord> = read_jsonl(&dir.join(corpus::CODES_FILE))?;
            let dim = codes.first().map_or(0, |c| c.codes.len() * cb.dim);
            let mut data = Vec::new();
            for c in &codes {
                for ids in &c.codes {
                    data.extend(cb.decode(&CompositionalCode { ids: ids.clone() })?);
                }
            }
            EmbeddingMatrix::new(codes.iter().map(|c| c.program_id.clone()).collect(), dim, data, Producer::BehavioralPq)?
        }
    };
    matrix.write(out)?;
    eprintln!("{} x {} embedding -> {}", matrix.len(), matrix.dim, out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if cli.strict {
        cfg.probes.policy = FailurePolicy::Strict;
        cfg.spectrum.policy = FailurePolicy::Strict;
        cfg.labels.policy = FailurePolicy::Strict;
    }
    match &cli.command {
        Command::BuildProbes { probe, .. } => apply_probe_args(&mut cfg, probe),
        Command::Dataset { probe, pq, .. } => {
            apply_probe_args(&mut cfg, probe);
            apply_pq_args(&mut cfg, pq);
        }
        Command::TrainCodebook { pq, .. } => apply_pq_args(&mut cfg, pq),
        Command::Spectrum { timeout: Some(t), .. } | Command::Labels { timeout: Some(t), .. } => {
            cfg.optimizer.timeout_secs = *t
        }
        Command::Eval { knn_k, key_feature, .. } => {
            if let Some(k) = knn_k {
                cfg.eval.knn_k = *k;
            }
            if let Some(f) = key_feature {
                cfg.eval.key_feature = *f;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    if let Some(n) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    log::debug!("config hash {}", cfg.hash());
    let ctx = Ctx {
        cfg,
        optimizer: cli.optimizer.clone(),
        mock: cli.mock_optimizer,
    };

    match cli.command {
        Command::Features { inputs, out } => cmd_features(&inputs, &out),
        Command::Manifest { dir, out, suite } => {
            if !dir.is_dir() {
                bail!("not a directory: {}", dir.display());
            }
            let s = &ctx.cfg.split;
            let mut m = CorpusManifest::scan(&dir, &suite, [s.train, s.val], ctx.cfg.split_seed())?;
            // Paths are stored relative to the manifest's own directory.
            let base = manifest_base(&out);
            let root = std::path::absolute(&dir)?;
            let base_abs = std::path::absolute(if base.as_os_str().is_empty() { Path::new(".") } else { &base })?;
            for e in &mut m.entries {
                let full = root.join(&e.source_path);
                e.source_path = full.strip_prefix(&base_abs).map(Path::to_path_buf).unwrap_or(full);
            }
            m.pipeline_config_hash = ctx.cfg.hash();
            m.write(&out)?;
            eprintln!("{} programs -> {}", m.entries.len(), out.display());
            Ok(())
        }
        Command::BuildProbes { manifest, out, .. } => {
            let (m, programs) = load_manifest(&manifest)?;
            let set = build_probes(&ctx, &m, &programs)?;
            set.write(&out)?;
            eprintln!("{} probes of length {} -> {}", set.len(), set.length, out.display());
            Ok(())
        }
        Command::Spectrum { manifest, probes, out, .. } => {
            let (_, programs) = load_manifest(&manifest)?;
            let probes = ProbeSet::read(&probes)?;
            let driver = ctx.driver()?;
            let spectra = programs
                .iter()
                .map(|p| compute_spectrum(&driver, p, &probes, ctx.cfg.spectrum.reaction, ctx.cfg.spectrum.policy))
                .collect::<Result<Vec<_>, _>>()?;
            std::fs::create_dir_all(&out)?;
            write_spectra(&out.join(corpus::SPECTRA_FILE), &out.join(corpus::SPECTRA_INDEX_FILE), probes.len(), &spectra)?;
            eprintln!("{} spectra -> {}", spectra.len(), out.display());
            Ok(())
        }
        Command::TrainCodebook { spectra, manifest, out, .. } => {
            let all = read_spectra(&spectra.join(corpus::SPECTRA_FILE), &spectra.join(corpus::SPECTRA_INDEX_FILE))?;
            let splits: BTreeMap<String, Split> = match &manifest {
                Some(m) => CorpusManifest::read(m)?
                    .entries
                    .into_iter()
                    .map(|e| (e.program_id, e.split))
                    .collect(),
                None => BTreeMap::new(),
            };
            let tagged: Vec<(Split, &_)> = all
                .iter()
                .map(|s| (splits.get(&s.program_id).copied().unwrap_or(Split::Train), s))
                .collect();
            let rows = corpus::codebook_training_rows(&tagged);
            let cb = train_codebook(&rows, AUTOPHASE_DIM, &ctx.cfg.pq_config())?;
            cb.write(&out)?;
            eprintln!(
                "codebook M={} k*={} ({} rows) -> {}",
                cb.m,
                cb.k_star,
                rows.len() / AUTOPHASE_DIM,
                out.display()
            );
            Ok(())
        }
        Command::Encode { codebook, spectra, out } => {
            let cb = Codebook::read(&codebook)?;
            let all = read_spectra(&spectra.join(corpus::SPECTRA_FILE), &spectra.join(corpus::SPECTRA_INDEX_FILE))?;
            let records = all
                .iter()
                .map(|s| {
                    let seq = cb.encode_spectrum(s)?;
                    Ok(CodeRecord {
                        format_version: corpus::FORMAT_VERSION,
                        program_id: seq.program_id,
                        m: cb.m,
                        codes: seq.codes.into_iter().map(|c| c.ids).collect(),
                        valid: seq.valid,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_jsonl(&out, &records)?;
            eprintln!("{} code sequences -> {}", records.len(), out.display());
            Ok(())
        }
        Command::Labels { manifest, out, .. } => {
            let m = CorpusManifest::read(&manifest)?;
            let driver = ctx.driver()?;
            let labels = corpus::recompute_labels(
                &m,
                &manifest_base(&manifest),
                &driver,
                &ctx.cfg.label_passes(),
                ctx.cfg.labels.policy,
            )?;
            write_jsonl(&out, &labels)?;
            eprintln!("{} labels -> {}", labels.len(), out.display());
            Ok(())
        }
        Command::Dataset { manifest, out, probe_set, codebook, .. } => {
            let (m, programs) = load_manifest(&manifest)?;
            std::fs::create_dir_all(&out)?;
            let probe_set = match &probe_set {
                Some(p) => ProbeSet::read(p)?,
                None => build_probes(&ctx, &m, &programs)?,
            };
            probe_set.write(out.join("probes.json"))?;
            let cb = codebook.as_ref().map(Codebook::read).transpose()?;
            let driver = ctx.driver()?;
            let (summary, cb) = build_dataset(&m, &manifest_base(&manifest), &probe_set, cb, &driver, &dataset_options(&ctx.cfg), &out)?;
            if let Some(cb) = cb {
                cb.write(out.join("codebook.pqcb"))?;
            }
            eprintln!(
                "{} programs, {} probes, {} errors -> {}",
                summary.programs,
                summary.probes,
                summary.errors,
                out.display()
            );
            if summary.errors > 0 {
                let errs: Vec<ErrorRecord> = read_jsonl(&out.join(corpus::ERRORS_FILE))?;
                for e in errs {
                    log::warn!("{} [{}]: {}", e.program_id, e.stage, e.message);
                }
            }
            Ok(())
        }
        Command::Eval {
            labels,
            predictions,
            embeddings,
            dataset,
            probes,
            report,
            ..
        } => cmd_eval(
            &ctx,
            &labels,
            predictions.as_deref(),
            embeddings.as_deref(),
            dataset.as_deref(),
            probes.as_deref(),
            report.as_deref(),
        ),
        Command::ExportEmbeddings { dataset, kind, out } => cmd_export(&dataset, kind, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }
}
