use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use claimcheck::corpus::{self, stratified_split};
use claimcheck::embedding::EmbeddingProviderConfig;
use claimcheck::eval::{self, RunMeta};
use claimcheck::evidence::{SelectedEvidence, SelectionRecord};
use claimcheck::export::{self, AdapterConfig};
use claimcheck::jsonl;
use claimcheck::llm::backend::{ChatBackend, HttpBackendConfig, RecordingBackend};
use claimcheck::llm::prompt::{PromptTemplate, DEFAULT_TOKEN_BUDGET};
use claimcheck::llm::{BatchOptions, GenerationLogRecord, GenerationParams, GenerationResult};
use claimcheck::pipeline::{self, EmbedderSpec, LlmSpec, RunConfig};
use claimcheck::retry::RetryPolicy;
use claimcheck::verdict::{self, RuleSet, VerdictRecord};
use claimcheck::{Execution, SelectionConfig, SplitSpec, Strategy};

#[derive(Parser)]
#[command(
    name = "claimcheck",
    version,
    about = "Evidence selection and LLM verification for numerical claims"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate claim and evidence files and print label counts.
    Ingest(IngestArgs),
    /// Stratified train/validation split.
    Split(SplitArgs),
    /// Select evidence for every claim.
    Select(SelectArgs),
    /// Generate verdicts for selected evidence.
    Verify(VerifyArgs),
    /// Map generations to labels.
    Parse(ParseArgs),
    /// Score verdicts against gold labels.
    Evaluate(EvaluateArgs),
    /// Write prompt/response pairs and the adapter config for fine-tuning.
    ExportTrain(ExportArgs),
    /// Select, verify, parse and evaluate in one run directory.
    Run(RunArgs),
    /// Run several configurations and compare them.
    Grid(GridArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Claims JSONL.
    #[arg(long)]
    claims: PathBuf,
    /// Evidence JSONL.
    #[arg(long)]
    evidence: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<claimcheck::Dataset> {
        Ok(pipeline::load_dataset(&self.claims, self.evidence.as_deref())?)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for train.claims.jsonl, validation.claims.jsonl (and evidence files).
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    /// Base URL of an embedding service exposing POST /embed. The stub embedder is used when absent.
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// Append-only embedding cache file (remote embedder only).
    #[arg(long, requires = "embed_endpoint")]
    embed_cache: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    embed_batch_size: usize,
}

impl EmbedArgs {
    fn spec(&self) -> EmbedderSpec {
        match &self.embed_endpoint {
            Some(url) => {
                let mut config = EmbeddingProviderConfig::new(url.clone());
                config.cache_path = self.embed_cache.clone();
                config.batch_size = self.embed_batch_size;
                EmbedderSpec::Http(config)
            }
            None => EmbedderSpec::default(),
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// full-document, top-k-bm25 or top-k-semantic.
    #[arg(long)]
    strategy: Strategy,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    max_documents: usize,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Disable the data-parallel path.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LlmArgs {
    /// mock, replay or http.
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Recorded responses for the replay backend.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Chat-completions URL for the http backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 0.3)]
    temperature: f64,
    #[arg(long, default_value_t = 0.9)]
    top_p: f64,
    #[arg(long, default_value_t = 30)]
    max_new_tokens: u32,
    #[arg(long, default_value = claimcheck::llm::DEFAULT_MODEL)]
    model: String,
    /// Sampling seed forwarded to the backend.
    #[arg(long)]
    sampling_seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TOKEN_BUDGET)]
    token_budget: usize,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long, default_value_t = 0.2)]
    max_failure_rate: f64,
}

impl LlmArgs {
    fn spec(&self) -> Result<LlmSpec> {
        Ok(match self.backend.as_str() {
            "mock" => LlmSpec::Mock,
            "replay" => LlmSpec::Replay {
                fixture: self.fixture.clone().context("--fixture is required for the replay backend")?,
            },
            "http" => LlmSpec::Http(HttpBackendConfig {
                endpoint: self.endpoint.clone().context("--endpoint is required for the http backend")?,
                api_key_env: self.api_key_env.clone(),
                timeout_ms: self.timeout_ms,
            }),
            other => bail!("unknown backend `{other}` (expected mock, replay or http)"),
        })
    }

    fn params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            top_p: self.top_p,
            max_new_tokens: self.max_new_tokens,
            model_name: self.model.clone(),
            seed: self.sampling_seed,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    claims: PathBuf,
    /// Output of `select`.
    #[arg(long)]
    selections: PathBuf,
    #[command(flatten)]
    llm: LlmArgs,
    /// Save every answer as a replay fixture.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Generation log; failures go to a sibling `failures.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ParseArgs {
    /// Generation log from `verify`.
    #[arg(long)]
    generations: PathBuf,
    /// Rule file; the built-in rules are used when absent.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    claims: PathBuf,
    #[arg(long)]
    verdicts: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "")]
    run_name: String,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    strategy: Strategy,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[command(flatten)]
    embed: EmbedArgs,
    #[arg(long, default_value_t = DEFAULT_TOKEN_BUDGET)]
    token_budget: usize,
    #[arg(long, default_value = claimcheck::llm::DEFAULT_MODEL)]
    base_model: String,
    /// Pair file.
    #[arg(long)]
    out: PathBuf,
    /// Adapter config TOML.
    #[arg(long)]
    adapter_config: PathBuf,
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    claims: Option<PathBuf>,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[command(flatten)]
    embed: EmbedArgs,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Evaluate only the validation part of a stratified split.
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long)]
    sequential: bool,
}

impl RunFlags {
    fn config(&self, name: &str, strategy: Strategy) -> Result<RunConfig> {
        let claims = self.claims.clone().context("--claims is required")?;
        let mut config = RunConfig::new(name, claims, strategy, &self.out_dir);
        config.evidence_path = self.evidence.clone();
        config.selection.k = self.k;
        config.embedder = self.embed.spec();
        config.llm = self.llm.spec()?;
        config.generation = self.llm.params();
        config.token_budget = self.llm.token_budget;
        config.concurrency = self.llm.concurrency;
        config.max_failure_rate = self.llm.max_failure_rate;
        config.rules_path = self.rules.clone();
        config.train_fraction = self.train_fraction;
        config.seed = self.seed;
        if self.sequential {
            config.execution = Execution::Sequential;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration JSON.
    #[arg(long, conflicts_with_all = ["manifest", "claims"])]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.json.
    #[arg(long, conflicts_with = "claims")]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    flags: RunFlags,
}

#[derive(Args)]
struct GridArgs {
    /// JSON array of run configurations.
    #[arg(long, conflicts_with = "claims")]
    config: Option<PathBuf>,
    /// Strategies to compare when building the grid from flags.
    #[arg(long, value_delimiter = ',', default_value = "full-document,top-k-bm25,top-k-semantic")]
    strategies: Vec<Strategy>,
    /// Where comparison.txt and comparison.jsonl go.
    #[arg(long)]
    grid_dir: PathBuf,
    #[command(flatten)]
    flags: RunFlags,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error and its causes, skipping causes already spelled out by the
/// message above them.
fn describe(e: &anyhow::Error) -> String {
    let mut message = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !message.contains(&text) {
            message.push_str(": ");
            message.push_str(&text);
        }
    }
    message
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Split(a) => split(a),
        Command::Select(a) => select(a),
        Command::Verify(a) => verify(a),
        Command::Parse(a) => parse(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExportTrain(a) => export_train(a),
        Command::Run(a) => run(a),
        Command::Grid(a) => grid(a),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let counts = dataset.label_counts();
    let documents: usize = dataset.claims().iter().map(|c| dataset.evidence(&c.id).len()).sum();
    let unlabeled = dataset.claims().iter().filter(|c| c.gold_label.is_none()).count();
    let summary = serde_json::json!({
        "claims": dataset.len(),
        "documents": documents,
        "labels": { "True": counts[0], "False": counts[1], "Conflicting": counts[2] },
        "unlabeled": unlabeled,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let spec = SplitSpec {
        train_fraction: a.train_fraction,
        seed: a.seed,
    };
    let (train, validation) = stratified_split(&dataset, &spec)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for (name, part) in [("train", &train), ("validation", &validation)] {
        corpus::write_claims(part, &a.out_dir.join(format!("{name}.claims.jsonl")))?;
        if a.data.evidence.is_some() {
            corpus::write_evidence(part, &a.out_dir.join(format!("{name}.evidence.jsonl")))?;
        }
    }
    println!("train {} / validation {}", train.len(), validation.len());
    Ok(())
}

fn selections(
    dataset: &claimcheck::Dataset,
    strategy: Strategy,
    config: &SelectionConfig,
    embed: &EmbedArgs,
    execution: Execution,
) -> Result<Vec<SelectedEvidence>> {
    let embedder = match strategy {
        Strategy::TopKSemantic => Some(embed.spec().build()?),
        _ => None,
    };
    Ok(pipeline::select_evidence(
        dataset,
        strategy,
        config,
        embedder.as_deref(),
        execution,
    )?)
}

fn select(a: SelectArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let config = SelectionConfig {
        k: a.k,
        max_documents: a.max_documents,
        ..Default::default()
    };
    config.validate()?;
    let execution = if a.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let selected = selections(&dataset, a.strategy, &config, &a.embed, execution)?;
    let records: Vec<SelectionRecord> = selected.iter().map(SelectedEvidence::to_record).collect();
    jsonl::write_records(&a.out, &records)?;
    let empty = selected.iter().filter(|s| s.is_empty()).count();
    println!("{} selections written ({} without evidence)", records.len(), empty);
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let dataset = corpus::ingest_claims(&a.claims)?;
    let selected: Vec<SelectedEvidence> = jsonl::read_records::<SelectionRecord>(&a.selections)?
        .into_iter()
        .map(|(_, r)| r.into())
        .collect();
    let backend = a.llm.spec()?.build()?;
    let recorder = RecordingBackend::new(backend);
    let options = BatchOptions {
        concurrency: a.llm.concurrency,
        max_failure_rate: a.llm.max_failure_rate,
        retry: RetryPolicy::generation(),
    };
    let params = a.llm.params();
    let outcomes = pipeline::verify(
        &dataset,
        &selected,
        &PromptTemplate::default(),
        a.llm.token_budget,
        &params,
        &recorder as &dyn ChatBackend,
        &options,
    )?;
    let mut log = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(result) => log.push(GenerationLogRecord {
                result,
                params: params.clone(),
            }),
            Err(failure) => failures.push(failure),
        }
    }
    jsonl::write_records(&a.out, &log)?;
    jsonl::write_records(&sibling(&a.out, "failures.jsonl"), &failures)?;
    if let Some(path) = &a.record {
        recorder.save(path)?;
    }
    println!("{} generated, {} failed", log.len(), failures.len());
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn parse(a: ParseArgs) -> Result<()> {
    let rules = match &a.rules {
        Some(path) => RuleSet::load(path)?,
        None => RuleSet::default(),
    };
    let results: Vec<GenerationResult> = jsonl::read_records::<GenerationLogRecord>(&a.generations)?
        .into_iter()
        .map(|(_, r)| r.result)
        .collect();
    let parsed = verdict::parse_batch(&results, &rules);
    jsonl::write_records(&a.out, &parsed.verdicts)?;
    println!(
        "{} verdicts, fallback rate {:.3}",
        parsed.verdicts.len(),
        parsed.fallback_rate
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let dataset = corpus::ingest_claims(&a.claims)?;
    let verdicts: Vec<VerdictRecord> = jsonl::read_records(&a.verdicts)?.into_iter().map(|(_, v)| v).collect();
    let fallbacks = verdicts.iter().filter(|v| v.verdict.fallback_used).count();
    let meta = RunMeta {
        run_name: a.run_name,
        parser_fallback_rate: if verdicts.is_empty() {
            0.0
        } else {
            fallbacks as f64 / verdicts.len() as f64
        },
        ..Default::default()
    };
    let report = pipeline::score(&dataset, &verdicts, meta)?;
    if let Some(out) = &a.out {
        jsonl::write_json(out, &report)?;
    }
    print!("{}", eval::render_report(&report, 3));
    Ok(())
}

fn export_train(a: ExportArgs) -> Result<()> {
    let dataset = a.data.load()?;
    let config = SelectionConfig {
        k: a.k,
        ..Default::default()
    };
    config.validate()?;
    let selected = selections(&dataset, a.strategy, &config, &a.embed, Execution::default())?;
    let template = PromptTemplate::default();
    let summary = export::export_pairs(&dataset, a.strategy, &selected, &template, a.token_budget, &a.out)?;
    let adapter = AdapterConfig {
        base_model: a.base_model,
        evidence_strategy: a.strategy,
        ..Default::default()
    };
    export::emit_adapter_config(&adapter, &a.adapter_config)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let outcome = if let Some(manifest) = &a.manifest {
        pipeline::rerun_manifest(manifest)?
    } else {
        let config = match &a.config {
            Some(path) => jsonl::read_json::<RunConfig>(path)?,
            None => {
                let strategy = a.flags.strategy.context("--strategy is required")?;
                let name = a.flags.name.clone().unwrap_or_else(|| strategy.to_string());
                a.flags.config(&name, strategy)?
            }
        };
        pipeline::cmd_run(&config)?
    };
    print!("{}", eval::render_report(&outcome.report, 3));
    println!("run directory: {}", outcome.dir.display());
    Ok(())
}

fn grid(a: GridArgs) -> Result<()> {
    let configs: Vec<RunConfig> = match &a.config {
        Some(path) => jsonl::read_json(path)?,
        None => {
            let prefix = a.flags.name.clone();
            a.strategies
                .iter()
                .map(|s| {
                    let name = match &prefix {
                        Some(p) => format!("{p}-{s}"),
                        None => s.to_string(),
                    };
                    a.flags.config(&name, *s)
                })
                .collect::<Result<_>>()?
        }
    };
    let outcome = pipeline::cmd_grid(&configs, &a.grid_dir)?;
    print!("{}", outcome.table.render(3));
    Ok(())
}
