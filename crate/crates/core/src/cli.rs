//! Command-line surface: `scan`, `ingest`, `split`, `train`, `eval`,
//! `analyze`, `bench` and `compare`.
//!
//! Effective configuration is layered as flags > environment > config
//! file > defaults. Every path ends in exit code 0, 1 (scan findings) or 2.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{project_2d, separation_with, write_projection_csv, SeparationOptions, SeparationReport};
use crate::bench::{
    aggregate_runs, comparison_report, load_tool_rows, published_tool_rows, time_op, AggregateStats,
    CategoryTiming, ComparisonRow, MonotonicClock, DEFAULT_REPEATS, DEFAULT_WARMUP,
};
use crate::classifier::{load_checkpoint, save_checkpoint, train, Checkpoint, EpochStats, Mlp, MlpArchitecture, Preset};
use crate::embedder::{
    embed_batch, CachedProvider, EmbeddingCache, EmbeddingProvider, EmbeddingVector, ProviderKind, ProviderSpec,
    ENDPOINT_ENV,
};
use crate::error::{Error, Result};
use crate::ingest::{load_csv, load_jsonl, split_dataset, ColumnMapping, LabeledDataset, SplitSpec};
use crate::metrics::MetricReport;
use crate::scanner::{scan_and_classify, ScanConfig, EXIT_CLEAN, EXIT_ERROR};
use crate::taxonomy::{default_rules, load_rules, CredentialCategory, RuleSignature};

pub const ENV_CONFIG: &str = "CREDSCAN_CONFIG";
pub const ENV_SEED: &str = "CREDSCAN_SEED";
pub const ENV_OUTPUT: &str = "CREDSCAN_OUTPUT";
pub const ENV_PROVIDER: &str = "CREDSCAN_PROVIDER";
pub const ENV_MODEL: &str = "CREDSCAN_MODEL";
pub const ENV_CACHE: &str = "CREDSCAN_CACHE";
/// Default remote model when none is configured.
pub const DEFAULT_REMOTE_MODEL: &str = "gpt2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Json,
    Jsonl,
}

/// Which records feed training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum RecordFilter {
    /// Only records labeled as true credentials.
    #[default]
    True,
    All,
}

#[derive(Debug, Parser)]
#[command(name = "credscan", version, about = "Find and classify hard-coded credentials")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub output: Option<OutputFormat>,
    #[arg(long, global = true, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Embedding sidecar URL (also read from CREDSCAN_ENDPOINT).
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Model served by the sidecar, e.g. gpt2 or bert-base.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Rule set JSON replacing the built-in rules.
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    /// Append-only embedding cache file.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Print snippets unmasked.
    #[arg(long = "no-mask", global = true)]
    pub no_mask: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub show_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a directory tree for credential candidates.
    Scan(ScanArgs),
    /// Normalize a JSONL or CSV dataset to JSONL.
    Ingest(IngestArgs),
    /// Write seeded train/valid/test partitions.
    Split(SplitArgs),
    /// Embed, split and train a classifier preset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the seeded test partition.
    Eval(EvalArgs),
    /// Intra/inter-class distance statistics and a 2-D projection.
    Analyze(AnalyzeArgs),
    /// Time embedding (and optionally classification) per category.
    Bench(BenchArgs),
    /// Rank a measured result against published tool results.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    pub root: PathBuf,
    #[arg(long = "include")]
    pub include: Vec<String>,
    #[arg(long = "exclude")]
    pub exclude: Vec<String>,
    #[arg(long)]
    pub max_file_bytes: Option<u64>,
    /// Scan files that look binary.
    #[arg(long)]
    pub no_binary_skip: bool,
    #[arg(long)]
    pub entropy_floor: Option<f64>,
    #[arg(long)]
    pub min_token_length: Option<usize>,
    /// Classify candidates with this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetFormat {
    Auto,
    Jsonl,
    Csv,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: DatasetFormat,
    #[arg(long, value_enum, default_value = "true")]
    pub records: RecordFilter,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: DatasetFormat,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub text_column: Option<String>,
    #[arg(long)]
    pub category_column: Option<String>,
    #[arg(long)]
    pub is_true_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: DatasetFormat,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub valid: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test: f64,
    #[arg(long)]
    pub no_stratify: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Checkpoint destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the epoch history as JSON here.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Override the preset's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Retrain and evaluate on this many seeded splits and aggregate.
    #[arg(long)]
    pub splits: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Write projected points as x,y,category_id rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = crate::analysis::DEFAULT_PAIR_BUDGET)]
    pub pair_budget: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
    /// Also time classification with this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// MetricReport JSON for the measured row.
    #[arg(long, conflicts_with = "dataset")]
    pub report: Option<PathBuf>,
    /// Evaluate this dataset with --checkpoint to get the measured row.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "true")]
    pub records: RecordFilter,
    /// Tool rows JSON replacing the bundled published results.
    #[arg(long)]
    pub tools: Option<PathBuf>,
    #[arg(long, default_value = "credscan")]
    pub name: String,
}

/// The effective configuration after layering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    pub provider: ProviderSpec,
    pub rules_path: Option<PathBuf>,
    pub model_checkpoint: Option<PathBuf>,
    pub cache_path: Option<PathBuf>,
    pub output_format: OutputFormat,
    pub seed: u64,
    pub masking: bool,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            provider: ProviderSpec::fallback(),
            rules_path: None,
            model_checkpoint: None,
            cache_path: None,
            output_format: OutputFormat::Text,
            seed: 42,
            masking: true,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileProvider {
    kind: Option<ProviderKind>,
    model_name: Option<String>,
    dimension: Option<usize>,
    batch_size: Option<usize>,
    endpoint_url: Option<String>,
}

/// Config file schema; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    output: Option<OutputFormat>,
    masking: Option<bool>,
    rules: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    cache: Option<PathBuf>,
    provider: Option<FileProvider>,
}

fn parse_env<T: std::str::FromStr>(env: &dyn Fn(&str) -> Option<String>, key: &str) -> Result<Option<T>> {
    env(key)
        .map(|v| v.trim().parse::<T>().map_err(|_| Error::domain(format!("invalid value {v:?} for {key}"))))
        .transpose()
}

fn parse_value_enum<T: ValueEnum>(env: &dyn Fn(&str) -> Option<String>, key: &str) -> Result<Option<T>> {
    env(key)
        .map(|v| T::from_str(v.trim(), true).map_err(|_| Error::domain(format!("invalid value {v:?} for {key}"))))
        .transpose()
}

/// Layers defaults, the config file, environment and flags.
pub fn resolve_config(global: &GlobalArgs, env: &dyn Fn(&str) -> Option<String>) -> Result<CliConfig> {
    let mut cfg = CliConfig::default();
    let mut remote_model: Option<String> = None;
    let mut set_model = |spec: &mut ProviderSpec, name: String| {
        spec.model_name = name.clone();
        remote_model = Some(name);
    };

    let file_path = global.config.clone().or_else(|| env(ENV_CONFIG).map(PathBuf::from));
    if let Some(path) = file_path {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: FileConfig =
            toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        cfg.seed = file.seed.unwrap_or(cfg.seed);
        cfg.output_format = file.output.unwrap_or(cfg.output_format);
        cfg.masking = file.masking.unwrap_or(cfg.masking);
        cfg.rules_path = file.rules.or(cfg.rules_path);
        cfg.model_checkpoint = file.checkpoint.or(cfg.model_checkpoint);
        cfg.cache_path = file.cache.or(cfg.cache_path);
        if let Some(p) = file.provider {
            let spec = &mut cfg.provider;
            spec.kind = p.kind.unwrap_or(spec.kind);
            if let Some(m) = p.model_name {
                set_model(spec, m);
            }
            spec.dimension = p.dimension.unwrap_or(spec.dimension);
            spec.batch_size = p.batch_size.unwrap_or(spec.batch_size);
            spec.endpoint_url = p.endpoint_url.or(spec.endpoint_url.take());
        }
    }

    if let Some(seed) = parse_env::<u64>(env, ENV_SEED)? {
        cfg.seed = seed;
    }
    if let Some(out) = parse_value_enum::<OutputFormat>(env, ENV_OUTPUT)? {
        cfg.output_format = out;
    }
    if let Some(kind) = parse_value_enum::<ProviderKind>(env, ENV_PROVIDER)? {
        cfg.provider.kind = kind;
    }
    if let Some(url) = env(ENDPOINT_ENV) {
        cfg.provider.endpoint_url = Some(url);
    }
    if let Some(m) = env(ENV_MODEL) {
        set_model(&mut cfg.provider, m);
    }
    if let Some(c) = env(ENV_CACHE) {
        cfg.cache_path = Some(PathBuf::from(c));
    }

    cfg.seed = global.seed.unwrap_or(cfg.seed);
    cfg.output_format = global.output.unwrap_or(cfg.output_format);
    cfg.provider.kind = global.provider.unwrap_or(cfg.provider.kind);
    if let Some(url) = &global.endpoint {
        cfg.provider.endpoint_url = Some(url.clone());
    }
    if let Some(m) = &global.model {
        set_model(&mut cfg.provider, m.clone());
    }
    cfg.rules_path = global.rules.clone().or(cfg.rules_path);
    cfg.cache_path = global.cache.clone().or(cfg.cache_path);
    if global.no_mask {
        cfg.masking = false;
    }

    match cfg.provider.kind {
        ProviderKind::Remote if remote_model.is_none() => cfg.provider.model_name = DEFAULT_REMOTE_MODEL.into(),
        ProviderKind::Fallback => cfg.provider.endpoint_url = None,
        _ => {}
    }
    cfg.provider.validate()?;
    Ok(cfg)
}

fn build_provider(cfg: &CliConfig) -> Result<Box<dyn EmbeddingProvider>> {
    let inner = cfg.provider.build()?;
    Ok(match &cfg.cache_path {
        Some(path) => Box::new(CachedProvider::new(inner, EmbeddingCache::open(path)?)),
        None => inner,
    })
}

fn rules_for(cfg: &CliConfig) -> Result<Vec<RuleSignature>> {
    match &cfg.rules_path {
        Some(p) => load_rules(p),
        None => Ok(default_rules()),
    }
}

fn load_dataset(path: &Path, format: DatasetFormat, mapping: &ColumnMapping) -> Result<LabeledDataset> {
    let is_csv = match format {
        DatasetFormat::Csv => true,
        DatasetFormat::Jsonl => false,
        DatasetFormat::Auto => path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    if is_csv {
        load_csv(path, mapping)
    } else {
        load_jsonl(path)
    }
}

fn load_filtered(args: &DatasetArgs) -> Result<LabeledDataset> {
    let ds = load_dataset(&args.dataset, args.format, &ColumnMapping::default())?;
    let ds = match args.records {
        RecordFilter::True => ds.only_true(),
        RecordFilter::All => ds,
    };
    if ds.is_empty() {
        return Err(Error::domain(format!("{} has no usable records", args.dataset.display())));
    }
    Ok(ds)
}

fn embed_dataset(ds: &LabeledDataset, provider: &dyn EmbeddingProvider) -> Result<Vec<(EmbeddingVector, usize)>> {
    let texts: Vec<String> = ds.records.iter().map(|r| r.text.clone()).collect();
    let vectors = embed_batch(&texts, provider)?;
    Ok(vectors.into_iter().zip(ds.records.iter().map(|r| r.category.id())).collect())
}

fn test_report(model: &Mlp, test: &[(EmbeddingVector, usize)]) -> Result<MetricReport> {
    let mut predictions = Vec::with_capacity(test.len());
    for (x, _) in test {
        predictions.push(model.predict_class(x.as_slice())?.0);
    }
    let labels: Vec<usize> = test.iter().map(|(_, y)| *y).collect();
    MetricReport::from_predictions(&labels, &predictions, model.arch.num_classes)
}

fn checkpoint_path(flag: &Option<PathBuf>, cfg: &CliConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.model_checkpoint.clone())
}

fn load_model_for(path: &Path, provider: &dyn EmbeddingProvider) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.arch.input_dim != provider.dimension() {
        return Err(Error::domain(format!(
            "checkpoint expects {}-dim embeddings but the provider produces {}",
            ckpt.model.arch.input_dim,
            provider.dimension()
        )));
    }
    Ok(ckpt)
}

/// Rendered command output plus the exit code it implies.
struct Rendered {
    text: String,
    code: i32,
}

impl Rendered {
    fn ok(text: String) -> Self {
        Rendered { text, code: EXIT_CLEAN }
    }
}

fn render<T: Serialize>(value: &T, format: OutputFormat, text: impl FnOnce() -> String) -> Result<Rendered> {
    let out = match format {
        OutputFormat::Text => text(),
        OutputFormat::Json => serde_json::to_string_pretty(value)? + "\n",
        OutputFormat::Jsonl => serde_json::to_string(value)? + "\n",
    };
    Ok(Rendered::ok(out))
}

fn cmd_scan(args: &ScanArgs, cfg: &CliConfig) -> Result<Rendered> {
    let mut scan = ScanConfig::new(&args.root);
    scan.include_globs = args.include.clone();
    scan.exclude_globs.extend(args.exclude.iter().cloned());
    scan.max_file_bytes = args.max_file_bytes.unwrap_or(scan.max_file_bytes);
    scan.binary_skip = !args.no_binary_skip;
    scan.entropy_floor_default = args.entropy_floor.unwrap_or(scan.entropy_floor_default);
    scan.min_token_length = args.min_token_length.unwrap_or(scan.min_token_length);
    scan.mask = cfg.masking;
    let rules = rules_for(cfg)?;
    let report = match checkpoint_path(&args.checkpoint, cfg) {
        Some(path) => {
            let provider = build_provider(cfg)?;
            let ckpt = load_model_for(&path, provider.as_ref())?;
            scan_and_classify(&scan, &rules, Some(&ckpt.model), Some(provider.as_ref()))?
        }
        None => scan_and_classify(&scan, &rules, None, None)?,
    };
    let text = match cfg.output_format {
        OutputFormat::Text => report.to_text(),
        OutputFormat::Jsonl => report.to_jsonl()?,
        OutputFormat::Json => serde_json::to_string_pretty(&report)? + "\n",
    };
    Ok(Rendered {
        text,
        code: report.exit_code(),
    })
}

#[derive(Debug, Serialize)]
struct IngestOutput {
    name: String,
    records: usize,
    distribution: BTreeMap<String, usize>,
    out: PathBuf,
}

fn distribution_text(dist: &BTreeMap<String, usize>) -> String {
    let mut s = String::new();
    for cat in CredentialCategory::ALL {
        let n = dist.get(cat.name()).copied().unwrap_or(0);
        let _ = writeln!(s, "  {:<20} {n}", cat.name());
    }
    s
}

fn cmd_ingest(args: &IngestArgs, cfg: &CliConfig) -> Result<Rendered> {
    let mut mapping = ColumnMapping::default();
    if let Some(c) = &args.text_column {
        mapping.text = c.clone();
    }
    if let Some(c) = &args.category_column {
        mapping.category = c.clone();
    }
    if let Some(c) = &args.is_true_column {
        mapping.is_true = c.clone();
    }
    let ds = load_dataset(&args.input, args.format, &mapping)?;
    ds.write_jsonl(&args.out)?;
    let out = IngestOutput {
        name: ds.name.clone(),
        records: ds.len(),
        distribution: crate::ingest::distribution(&ds),
        out: args.out.clone(),
    };
    render(&out, cfg.output_format, || {
        format!(
            "wrote {} records to {}\n{}",
            out.records,
            out.out.display(),
            distribution_text(&out.distribution)
        )
    })
}

#[derive(Debug, Serialize)]
struct SplitOutput {
    spec: SplitSpec,
    train: usize,
    valid: usize,
    test: usize,
    out_dir: PathBuf,
}

fn cmd_split(args: &SplitArgs, cfg: &CliConfig) -> Result<Rendered> {
    let ds = load_dataset(&args.dataset, args.format, &ColumnMapping::default())?;
    let spec = SplitSpec {
        train_fraction: args.train,
        valid_fraction: args.valid,
        test_fraction: args.test,
        seed: cfg.seed,
        stratified: !args.no_stratify,
    };
    let split = split_dataset(&ds, &spec)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        part.write_jsonl(&args.out_dir.join(format!("{name}.jsonl")))?;
    }
    let out = SplitOutput {
        spec,
        train: split.train.len(),
        valid: split.valid.len(),
        test: split.test.len(),
        out_dir: args.out_dir.clone(),
    };
    render(&out, cfg.output_format, || {
        format!(
            "train {} / valid {} / test {} (seed {}) written to {}\n",
            out.train,
            out.valid,
            out.test,
            spec.seed,
            out.out_dir.display()
        )
    })
}

#[derive(Debug, Serialize)]
struct TrainOutput {
    preset: Preset,
    seed: u64,
    train: usize,
    valid: usize,
    test: usize,
    history: Vec<EpochStats>,
    test_report: Option<MetricReport>,
    checkpoint: PathBuf,
}

fn history_text(history: &[EpochStats]) -> String {
    let mut s = format!("{:>5} {:>10} {:>9} {:>10} {:>9}\n", "epoch", "train_loss", "train_acc", "valid_loss", "valid_acc");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for h in history {
        let _ = writeln!(
            s,
            "{:>5} {:>10.4} {:>9.4} {:>10} {:>9}",
            h.epoch,
            h.train_loss,
            h.train_accuracy,
            opt(h.valid_loss),
            opt(h.valid_accuracy)
        );
    }
    s
}

struct TrainedSplit {
    model: Mlp,
    history: Vec<EpochStats>,
    sizes: (usize, usize, usize),
    test: Vec<(EmbeddingVector, usize)>,
}

/// Splits with `seed`, embeds and trains `preset` (also seeded with `seed`).
fn train_on_split(
    ds: &LabeledDataset,
    provider: &dyn EmbeddingProvider,
    preset: Preset,
    seed: u64,
    epochs: Option<usize>,
) -> Result<TrainedSplit> {
    let split = split_dataset(ds, &SplitSpec::with_seed(seed))?;
    let train_set = embed_dataset(&split.train, provider)?;
    let valid_set = embed_dataset(&split.valid, provider)?;
    let test = embed_dataset(&split.test, provider)?;
    let mut config = preset.config(seed);
    config.epochs = epochs.unwrap_or(config.epochs);
    let arch = MlpArchitecture {
        input_dim: provider.dimension(),
        ..MlpArchitecture::default()
    };
    let (model, history) = train(&train_set, &valid_set, arch, &config)?;
    Ok(TrainedSplit {
        model,
        history,
        sizes: (split.train.len(), split.valid.len(), split.test.len()),
        test,
    })
}

fn cmd_train(args: &TrainArgs, cfg: &CliConfig) -> Result<Rendered> {
    let ds = load_filtered(&args.data)?;
    let provider = build_provider(cfg)?;
    let run = train_on_split(&ds, provider.as_ref(), args.preset, cfg.seed, args.epochs)?;
    save_checkpoint(
        &args.out,
        &Checkpoint {
            model: run.model.clone(),
            seed: cfg.seed,
            preset: args.preset.name().to_string(),
        },
    )?;
    if let Some(path) = &args.history {
        let json = serde_json::to_string_pretty(&run.history)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;
    }
    let test_report = if run.test.is_empty() {
        None
    } else {
        Some(test_report(&run.model, &run.test)?)
    };
    let out = TrainOutput {
        preset: args.preset,
        seed: cfg.seed,
        train: run.sizes.0,
        valid: run.sizes.1,
        test: run.sizes.2,
        history: run.history,
        test_report,
        checkpoint: args.out.clone(),
    };
    render(&out, cfg.output_format, || {
        let mut s = format!(
            "preset {} seed {}: train {} / valid {} / test {}\n",
            out.preset, out.seed, out.train, out.valid, out.test
        );
        s += &history_text(&out.history);
        if let Some(r) = &out.test_report {
            s += "\ntest partition\n";
            s += &r.to_text();
        }
        let _ = writeln!(s, "checkpoint written to {}", out.checkpoint.display());
        s
    })
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    report: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    aggregate: Option<AggregateStats>,
}

fn cmd_eval(args: &EvalArgs, cfg: &CliConfig) -> Result<Rendered> {
    let path = checkpoint_path(&args.checkpoint, cfg).ok_or_else(|| Error::domain("eval needs --checkpoint"))?;
    let ds = load_filtered(&args.data)?;
    let provider = build_provider(cfg)?;
    let ckpt = load_model_for(&path, provider.as_ref())?;
    let split = split_dataset(&ds, &SplitSpec::with_seed(cfg.seed))?;
    let eval_set = if split.test.is_empty() { &ds } else { &split.test };
    let report = test_report(&ckpt.model, &embed_dataset(eval_set, provider.as_ref())?)?;
    let aggregate = match args.splits {
        None => None,
        Some(0) => return Err(Error::domain("--splits must be at least 1")),
        Some(k) => {
            let preset: Preset = ckpt.preset.parse()?;
            let mut runs = Vec::with_capacity(k);
            for i in 0..k as u64 {
                let seed = cfg.seed.wrapping_add(i);
                let run = train_on_split(&ds, provider.as_ref(), preset, seed, None)?;
                if run.test.is_empty() {
                    return Err(Error::domain("dataset too small for a test partition"));
                }
                runs.push(test_report(&run.model, &run.test)?.summary());
            }
            Some(aggregate_runs(&runs)?)
        }
    };
    let out = EvalOutput { report, aggregate };
    render(&out, cfg.output_format, || {
        let mut s = out.report.to_text();
        if let Some(a) = &out.aggregate {
            s += "\n";
            s += &a.to_text();
        }
        s
    })
}

fn cmd_analyze(args: &AnalyzeArgs, cfg: &CliConfig) -> Result<Rendered> {
    let ds = load_filtered(&args.data)?;
    let provider = build_provider(cfg)?;
    let texts: Vec<String> = ds.records.iter().map(|r| r.text.clone()).collect();
    let vectors = embed_batch(&texts, provider.as_ref())?;
    let points: Vec<(EmbeddingVector, CredentialCategory)> =
        vectors.into_iter().zip(ds.records.iter().map(|r| r.category)).collect();
    let options = SeparationOptions {
        pair_budget: args.pair_budget,
        seed: cfg.seed,
    };
    let report = separation_with(&points, &options)?;
    if let Some(csv_path) = &args.csv {
        let embeddings: Vec<EmbeddingVector> = points.iter().map(|(v, _)| v.clone()).collect();
        let projection = project_2d(&embeddings)?;
        let categories: Vec<CredentialCategory> = points.iter().map(|(_, c)| *c).collect();
        let file = std::fs::File::create(csv_path).map_err(|e| Error::io(csv_path, e))?;
        write_projection_csv(file, &projection.points, &categories)?;
    }
    render(&report, cfg.output_format, || separation_text(&report))
}

fn separation_text(r: &SeparationReport) -> String {
    let opt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.6}"));
    let p = match (r.p_value, r.p_underflow) {
        (Some(p), true) => format!("{p:.3e} (underflow)"),
        (p, _) => opt(p),
    };
    let mut s = String::new();
    let _ = writeln!(s, "mean intra-class distance  {:.6}  (n = {})", r.mean_intra, r.n_intra);
    let _ = writeln!(s, "mean inter-class distance  {:.6}  (n = {})", r.mean_inter, r.n_inter);
    let _ = writeln!(s, "welch t                    {}", opt(r.t_statistic));
    let _ = writeln!(s, "degrees of freedom         {}", opt(r.degrees_freedom));
    let _ = writeln!(s, "p-value                    {p}");
    if r.sampled {
        let _ = writeln!(
            s,
            "pairs sampled: {} of {} (seed {})",
            r.n_intra + r.n_inter,
            r.total_pairs,
            r.sample_seed.unwrap_or_default()
        );
    }
    s
}

#[derive(Debug, Serialize)]
struct BenchOutput {
    provider: ProviderSpec,
    repeats: usize,
    warmup: usize,
    /// Embedding only, per category.
    representation: BTreeMap<String, CategoryTiming>,
    /// Embedding plus classification, when a checkpoint is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    detection: Option<BTreeMap<String, CategoryTiming>>,
}

fn bench_text(out: &BenchOutput) -> String {
    let mut s = String::new();
    let mut table = |title: &str, rows: &BTreeMap<String, CategoryTiming>| {
        let _ = writeln!(s, "{title} ({} repeats, {} warmup)", out.repeats, out.warmup);
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>12} {:>12} {:>12} {:>14}",
            "Category", "Items", "Mean (s)", "Std (s)", "95% CI (±s)", "Per item (s)"
        );
        for cat in CredentialCategory::ALL {
            if let Some(t) = rows.get(cat.name()) {
                let _ = writeln!(
                    s,
                    "{:<20} {:>6} {:>12.6} {:>12.6} {:>12.6} {:>14.3e}",
                    t.category,
                    t.items,
                    t.batch.mean_seconds,
                    t.batch.std_seconds,
                    t.batch.ci95_seconds,
                    t.per_item_mean_seconds
                );
            }
        }
    };
    table("representation", &out.representation);
    if let Some(d) = &out.detection {
        table("detection", d);
    }
    s
}

fn cmd_bench(args: &BenchArgs, cfg: &CliConfig) -> Result<Rendered> {
    let ds = load_filtered(&args.data)?;
    // timing through the cache would measure lookups, not representation
    let provider = cfg.provider.build()?;
    let model = match checkpoint_path(&args.checkpoint, cfg) {
        Some(p) => Some(load_model_for(&p, provider.as_ref())?.model),
        None => None,
    };
    let mut clock = MonotonicClock::default();
    let mut representation = BTreeMap::new();
    let mut detection = model.as_ref().map(|_| BTreeMap::new());
    for cat in CredentialCategory::ALL {
        let texts: Vec<String> = ds
            .records
            .iter()
            .filter(|r| r.category == cat)
            .map(|r| r.text.clone())
            .collect();
        if texts.is_empty() {
            continue;
        }
        let stats = time_op(
            |_| embed_batch(&texts, provider.as_ref()).map(|_| ()),
            args.repeats,
            args.warmup,
            &mut clock,
        )?;
        representation.insert(cat.name().to_string(), CategoryTiming::new(cat.name(), texts.len(), stats));
        if let (Some(m), Some(rows)) = (&model, detection.as_mut()) {
            let stats = time_op(
                |_| {
                    for v in embed_batch(&texts, provider.as_ref())? {
                        m.predict(&v)?;
                    }
                    Ok(())
                },
                args.repeats,
                args.warmup,
                &mut clock,
            )?;
            rows.insert(cat.name().to_string(), CategoryTiming::new(cat.name(), texts.len(), stats));
        }
    }
    let out = BenchOutput {
        provider: cfg.provider.clone(),
        repeats: args.repeats,
        warmup: args.warmup,
        representation,
        detection,
    };
    render(&out, cfg.output_format, || bench_text(&out))
}

fn cmd_compare(args: &CompareArgs, cfg: &CliConfig) -> Result<Rendered> {
    let measured = match (&args.report, &args.dataset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let report: MetricReport = serde_json::from_str(&text)?;
            Some(ComparisonRow::measured(&args.name, &report))
        }
        (None, Some(dataset)) => {
            let data = DatasetArgs {
                dataset: dataset.clone(),
                format: DatasetFormat::Auto,
                records: args.records,
            };
            let path = checkpoint_path(&args.checkpoint, cfg)
                .ok_or_else(|| Error::domain("--dataset needs --checkpoint"))?;
            let ds = load_filtered(&data)?;
            let provider = build_provider(cfg)?;
            let ckpt = load_model_for(&path, provider.as_ref())?;
            let split = split_dataset(&ds, &SplitSpec::with_seed(cfg.seed))?;
            let eval_set = if split.test.is_empty() { &ds } else { &split.test };
            let report = test_report(&ckpt.model, &embed_dataset(eval_set, provider.as_ref())?)?;
            Some(ComparisonRow::measured(&args.name, &report))
        }
        (None, None) => None,
    };
    let imported = match &args.tools {
        Some(path) => load_tool_rows(path)?,
        None => published_tool_rows(),
    };
    let table = comparison_report(measured, imported);
    render(&table.rows, cfg.output_format, || table.to_text())
}

fn execute(command: &Command, cfg: &CliConfig) -> Result<Rendered> {
    match command {
        Command::Scan(a) => cmd_scan(a, cfg),
        Command::Ingest(a) => cmd_ingest(a, cfg),
        Command::Split(a) => cmd_split(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::Analyze(a) => cmd_analyze(a, cfg),
        Command::Bench(a) => cmd_bench(a, cfg),
        Command::Compare(a) => cmd_compare(a, cfg),
    }
}

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_ERROR
            } else {
                let _ = write!(out, "{text}");
                EXIT_CLEAN
            };
        }
    };
    let cfg = match resolve_config(&cli.global, env) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    if cli.global.show_config {
        return match toml::to_string_pretty(&cfg) {
            Ok(s) => {
                let _ = write!(out, "{s}");
                EXIT_CLEAN
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                EXIT_ERROR
            }
        };
    }
    let Some(command) = &cli.command else {
        let _ = writeln!(err, "error: no subcommand given (try --help)");
        return EXIT_ERROR;
    };
    match execute(command, &cfg) {
        Ok(r) => {
            if out.write_all(r.text.as_bytes()).and_then(|_| out.flush()).is_err() {
                return EXIT_ERROR;
            }
            r.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

/// Process entry point used by the binary.
pub fn main_entry() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(
        std::env::args_os(),
        &|k| std::env::var(k).ok(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}
