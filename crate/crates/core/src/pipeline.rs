//! End-to-end runs: ingest → (split) → select → verify → parse → evaluate,
//! and grids of such runs.
//!
//! A run directory holds:
//!
//! | file               | content                                            |
//! |--------------------|----------------------------------------------------|
//! | `manifest.json`    | resolved [`RunConfig`] plus template hash, time    |
//! | `selections.jsonl` | one [`SelectionRecord`] per evaluated claim        |
//! | `generations.jsonl`| one [`GenerationLogRecord`] per generated claim    |
//! | `failures.jsonl`   | claims whose generation failed                     |
//! | `verdicts.jsonl`   | one [`VerdictRecord`] per generated claim          |
//! | `report.json`      | [`EvaluationReport`]                               |
//! | `report.txt`       | the same report, human readable                    |
//!
//! Existing run directories are never touched; a rerun goes to
//! `<run_name>-2`, `<run_name>-3`, ...

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::{self, Dataset, Label, SplitSpec};
use crate::embedding::{CachedEmbedder, Embedder, EmbeddingProviderConfig, HttpEmbedder, StubEmbedder, STUB_DIMENSION};
use crate::error::{Error, Result};
use crate::eval::{self, compare_runs, ComparisonTable, EvaluationReport, RunMeta};
use crate::evidence::{self, SelectedEvidence, SelectionConfig, SelectionRecord, Strategy};
use crate::jsonl;
use crate::llm::{
    self, BatchItem, BatchOptions, ChatBackend, GenerationFailure, GenerationLogRecord, GenerationParams, GenerationResult,
    HttpBackendConfig, HttpChatBackend, MockBackend, PromptTemplate, ReplayBackend, DEFAULT_TOKEN_BUDGET,
};
use crate::par::Execution;
use crate::retry::RetryPolicy;
use crate::verdict::{self, RuleSet, VerdictRecord};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    Stub {
        #[serde(default = "stub_dimension")]
        dimension: usize,
    },
    Http(EmbeddingProviderConfig),
}

fn stub_dimension() -> usize {
    STUB_DIMENSION
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Stub {
            dimension: STUB_DIMENSION,
        }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        Ok(match self {
            EmbedderSpec::Stub { dimension } => Box::new(StubEmbedder {
                dimension: *dimension,
                ..Default::default()
            }),
            EmbedderSpec::Http(config) => {
                let client = HttpEmbedder::new(config.clone())?;
                match &config.cache_path {
                    Some(path) => Box::new(CachedEmbedder::open(client, path)?),
                    None => Box::new(client),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LlmSpec {
    #[default]
    Mock,
    Replay {
        fixture: PathBuf,
    },
    Http(HttpBackendConfig),
}

impl LlmSpec {
    pub fn build(&self) -> Result<Box<dyn ChatBackend>> {
        Ok(match self {
            LlmSpec::Mock => Box::new(MockBackend),
            LlmSpec::Replay { fixture } => Box::new(ReplayBackend::load(fixture)?),
            LlmSpec::Http(config) => Box::new(HttpChatBackend::new(config.clone())?),
        })
    }
}

/// Everything needed to reproduce a run. Written verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_name: String,
    pub claims_path: PathBuf,
    #[serde(default)]
    pub evidence_path: Option<PathBuf>,
    pub strategy: Strategy,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub embedder: EmbedderSpec,
    #[serde(default)]
    pub llm: LlmSpec,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default)]
    pub template: PromptTemplate,
    #[serde(default = "default_budget")]
    pub token_budget: usize,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
    #[serde(default)]
    pub rules_path: Option<PathBuf>,
    /// When set, only the validation part of a stratified split is evaluated.
    #[serde(default)]
    pub train_fraction: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub execution: Execution,
    /// Backoff between retries; zero for offline backends.
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_budget() -> usize {
    DEFAULT_TOKEN_BUDGET
}

fn default_concurrency() -> usize {
    4
}

fn default_failure_rate() -> f64 {
    0.2
}

fn default_retry_backoff_ms() -> u64 {
    250
}

impl RunConfig {
    pub fn new(
        run_name: impl Into<String>,
        claims_path: impl Into<PathBuf>,
        strategy: Strategy,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            run_name: run_name.into(),
            claims_path: claims_path.into(),
            evidence_path: None,
            strategy,
            selection: SelectionConfig::default(),
            embedder: EmbedderSpec::default(),
            llm: LlmSpec::default(),
            generation: GenerationParams::default(),
            template: PromptTemplate::default(),
            token_budget: default_budget(),
            concurrency: default_concurrency(),
            max_failure_rate: default_failure_rate(),
            rules_path: None,
            train_fraction: None,
            seed: 0,
            output_dir: output_dir.into(),
            execution: Execution::default(),
            retry_backoff_ms: default_retry_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_name.trim().is_empty() || self.run_name.contains(['/', '\\']) {
            return Err(Error::invalid(
                "run_name",
                format!("`{}` is not a usable directory name", self.run_name),
            ));
        }
        self.selection.validate()?;
        self.generation.validate()?;
        if self.concurrency == 0 {
            return Err(Error::invalid("concurrency", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::invalid("max_failure_rate", "must lie in [0, 1]"));
        }
        if self.token_budget == 0 {
            return Err(Error::invalid("token_budget", "must be at least 1"));
        }
        Ok(())
    }

    fn rules(&self) -> Result<RuleSet> {
        match &self.rules_path {
            Some(path) => RuleSet::load(path),
            None => Ok(RuleSet::default()),
        }
    }

    fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            concurrency: self.concurrency,
            max_failure_rate: self.max_failure_rate,
            retry: RetryPolicy {
                initial_backoff: std::time::Duration::from_millis(self.retry_backoff_ms),
                ..RetryPolicy::generation()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub created_unix: u64,
    pub template_hash: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        jsonl::read_json(path)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: EvaluationReport,
}

/// Loads claims and, when configured, their evidence.
pub fn load_dataset(claims: &Path, evidence: Option<&Path>) -> Result<Dataset> {
    let dataset = corpus::ingest_claims(claims)?;
    match evidence {
        Some(path) => corpus::attach_evidence(&dataset, path),
        None => Ok(dataset),
    }
}

/// Selection for every claim. Claims with nothing to select from come back
/// as empty selections instead of errors.
pub fn select_evidence(
    dataset: &Dataset,
    strategy: Strategy,
    config: &SelectionConfig,
    embedder: Option<&dyn Embedder>,
    execution: Execution,
) -> Result<Vec<SelectedEvidence>> {
    evidence::select_all(dataset, strategy, config, embedder, execution)
        .into_iter()
        .map(|result| match result {
            Err(Error::MissingEvidence(id)) => Ok(SelectedEvidence::empty(&id, strategy)),
            other => other,
        })
        .collect()
}

/// Renders prompts for every non-empty selection and generates in one batch.
pub fn verify(
    dataset: &Dataset,
    selections: &[SelectedEvidence],
    template: &PromptTemplate,
    token_budget: usize,
    params: &GenerationParams,
    backend: &dyn ChatBackend,
    options: &BatchOptions,
) -> Result<Vec<std::result::Result<GenerationResult, GenerationFailure>>> {
    let claims = corpus::index_by_id(dataset);
    let items = selections
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            let claim = claims
                .get(s.claim_id.as_str())
                .ok_or_else(|| Error::OrphanEvidence(vec![s.claim_id.clone()]))?;
            Ok(BatchItem {
                claim_id: s.claim_id.clone(),
                prompt: llm::render_prompt(claim, s, template, token_budget)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    llm::run_batch(&items, params, backend, options)
}

/// Scores parsed verdicts against gold labels. Verdicts for unlabeled
/// claims are ignored.
pub fn score(dataset: &Dataset, verdicts: &[VerdictRecord], mut meta: RunMeta) -> Result<EvaluationReport> {
    let gold: HashMap<&str, Label> = dataset
        .claims()
        .iter()
        .filter_map(|c| c.gold_label.map(|l| (c.id.as_str(), l)))
        .collect();
    let (gold_labels, predicted): (Vec<Label>, Vec<Label>) = verdicts
        .iter()
        .filter_map(|v| gold.get(v.claim_id.as_str()).map(|g| (*g, v.verdict.label)))
        .unzip();
    meta.evaluated = gold_labels.len();
    Ok(eval::evaluate(&gold_labels, &predicted)?.with_meta(meta))
}

fn fresh_run_dir(output_dir: &Path, run_name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut candidate = output_dir.join(run_name);
    let mut n = 1;
    loop {
        match std::fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                candidate = output_dir.join(format!("{run_name}-{n}"));
            }
            Err(e) => return Err(Error::io(&candidate, e)),
        }
    }
}

pub fn cmd_run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let rules = config.rules()?;
    let backend = config.llm.build().map_err(Error::at_stage("verify"))?;
    let embedder = match config.strategy {
        Strategy::TopKSemantic => Some(config.embedder.build().map_err(Error::at_stage("select"))?),
        _ => None,
    };

    let mut dataset = load_dataset(&config.claims_path, config.evidence_path.as_deref()).map_err(Error::at_stage("ingest"))?;
    if let Some(train_fraction) = config.train_fraction {
        let spec = SplitSpec {
            train_fraction,
            seed: config.seed,
        };
        dataset = corpus::stratified_split(&dataset, &spec).map_err(Error::at_stage("split"))?.1;
    }

    let dir = fresh_run_dir(&config.output_dir, &config.run_name)?;
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        template_hash: config.template.hash(),
        config: config.clone(),
    };
    jsonl::write_json(&dir.join("manifest.json"), &manifest)?;

    let selections = select_evidence(
        &dataset,
        config.strategy,
        &config.selection,
        embedder.as_deref(),
        config.execution,
    )
    .map_err(Error::at_stage("select"))?;
    let records: Vec<SelectionRecord> = selections.iter().map(SelectedEvidence::to_record).collect();
    jsonl::write_records(&dir.join("selections.jsonl"), &records)?;
    let excluded_no_evidence = selections.iter().filter(|s| s.is_empty()).count();
    if excluded_no_evidence > 0 {
        tracing::warn!(count = excluded_no_evidence, "claims without evidence excluded from metrics");
    }

    let outcomes = verify(
        &dataset,
        &selections,
        &config.template,
        config.token_budget,
        &config.generation,
        backend.as_ref(),
        &config.batch_options(),
    )
    .map_err(Error::at_stage("verify"))?;
    let (generated, failures): (Vec<_>, Vec<_>) = outcomes.into_iter().partition(|r| r.is_ok());
    let generated: Vec<GenerationResult> = generated.into_iter().filter_map(|r| r.ok()).collect();
    let failures: Vec<GenerationFailure> = failures.into_iter().filter_map(|r| r.err()).collect();
    let log: Vec<GenerationLogRecord> = generated
        .iter()
        .map(|r| GenerationLogRecord {
            result: r.clone(),
            params: config.generation.clone(),
        })
        .collect();
    jsonl::write_records(&dir.join("generations.jsonl"), &log)?;
    jsonl::write_records(&dir.join("failures.jsonl"), &failures)?;

    let parsed = verdict::parse_batch(&generated, &rules);
    jsonl::write_records(&dir.join("verdicts.jsonl"), &parsed.verdicts)?;

    let meta = RunMeta {
        run_name: config.run_name.clone(),
        strategy: config.strategy.to_string(),
        model: config.generation.model_name.clone(),
        parser_fallback_rate: parsed.fallback_rate,
        evaluated: 0,
        excluded_no_evidence,
        excluded_failed: failures.len(),
    };
    let report = score(&dataset, &parsed.verdicts, meta).map_err(Error::at_stage("evaluate"))?;
    jsonl::write_json(&dir.join("report.json"), &report)?;
    std::fs::write(dir.join("report.txt"), eval::render_report(&report, 3)).map_err(|e| Error::io(&dir, e))?;
    Ok(RunOutcome { dir, report })
}

/// Re-executes the run described by a manifest.
pub fn rerun_manifest(path: &Path) -> Result<RunOutcome> {
    cmd_run(&Manifest::load(path)?.config)
}

#[derive(Debug)]
pub struct GridOutcome {
    pub runs: Vec<(String, Result<RunOutcome>)>,
    pub table: ComparisonTable,
}

/// Runs each configuration in turn and compares the successful ones. The
/// table is written to `grid_dir/comparison.{txt,jsonl}`.
pub fn cmd_grid(configs: &[RunConfig], grid_dir: &Path) -> Result<GridOutcome> {
    if configs.is_empty() {
        return Err(Error::invalid("configs", "grid needs at least one run"));
    }
    let runs: Vec<(String, Result<RunOutcome>)> = configs.iter().map(|c| (c.run_name.clone(), cmd_run(c))).collect();
    let reports: Vec<EvaluationReport> = runs
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .map(|o| o.report.clone())
        .collect();
    let failures: Vec<String> = runs
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    if reports.is_empty() {
        return Err(Error::GridFailed(failures));
    }
    let mut table = compare_runs(&reports);
    table.failures = failures;
    std::fs::create_dir_all(grid_dir).map_err(|e| Error::io(grid_dir, e))?;
    std::fs::write(grid_dir.join("comparison.txt"), table.render(3)).map_err(|e| Error::io(grid_dir, e))?;
    jsonl::write_records(&grid_dir.join("comparison.jsonl"), &table.rows)?;
    Ok(GridOutcome { runs, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let base = RunConfig::new("r", "c.jsonl", Strategy::TopKBm25, "out");
        assert!(base.validate().is_ok());
        assert!(RunConfig {
            run_name: "a/b".into(),
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig {
            concurrency: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        let mut bad_k = base.clone();
        bad_k.selection.k = 0;
        assert!(bad_k.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let mut config = RunConfig::new("r", "c.jsonl", Strategy::TopKSemantic, "out");
        config.embedder = EmbedderSpec::Http(EmbeddingProviderConfig::new("http://localhost:9000"));
        config.llm = LlmSpec::Replay {
            fixture: "f.jsonl".into(),
        };
        let text = serde_json::to_string(&config).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), config);
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let config: RunConfig =
            serde_json::from_str(r#"{"run_name":"r","claims_path":"c.jsonl","strategy":"top-k-bm25","output_dir":"out"}"#)
                .unwrap();
        assert_eq!(config, RunConfig::new("r", "c.jsonl", Strategy::TopKBm25, "out"));
    }

    #[test]
    fn rerun_goes_to_new_directory() {
        let dir = tempfile::tempdir().unwrap();
        let a = fresh_run_dir(dir.path(), "run").unwrap();
        let b = fresh_run_dir(dir.path(), "run").unwrap();
        assert_eq!(a, dir.path().join("run"));
        assert_eq!(b, dir.path().join("run-2"));
    }
}
