//! Supervised fine-tuning artifacts: prompt/response pairs and the adapter
//! configuration consumed by the external LoRA trainer.
//!
//! Pair file: one `{"prompt": ..., "response": ..., "claim_id": ...}` per line,
//! where `response` is exactly `True`, `False` or `Conflicting`.
//!
//! Adapter config: flat TOML, every field explicit, `format_version = 1`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label};
use crate::error::{Error, Result};
use crate::evidence::{SelectedEvidence, Strategy};
use crate::jsonl;
use crate::llm::{render_prompt, PromptTemplate, DEFAULT_MODEL};

pub const ADAPTER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub prompt: String,
    pub response: String,
    pub claim_id: String,
    #[serde(skip)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub records: usize,
    pub strategy: Strategy,
    /// Pair count per label name.
    pub label_counts: BTreeMap<String, usize>,
    pub truncated: usize,
    pub empty_evidence: usize,
}

/// Builds one pair per claim from its selected evidence. Claims missing from
/// `selections` are rendered with the empty-evidence text.
pub fn build_pairs(
    dataset: &Dataset,
    strategy: Strategy,
    selections: &[SelectedEvidence],
    template: &PromptTemplate,
    budget_tokens: usize,
) -> Result<(Vec<TrainingPair>, ExportSummary)> {
    let by_id: HashMap<&str, &SelectedEvidence> = selections.iter().map(|s| (s.claim_id.as_str(), s)).collect();
    let mut label_counts: BTreeMap<String, usize> = Label::ALL.iter().map(|l| (l.as_str().to_string(), 0)).collect();
    let mut summary = ExportSummary {
        records: 0,
        strategy,
        label_counts: BTreeMap::new(),
        truncated: 0,
        empty_evidence: 0,
    };
    let mut pairs = Vec::with_capacity(dataset.len());
    for claim in dataset.claims() {
        let label = claim.gold_label.ok_or_else(|| Error::Unlabeled(claim.id.clone()))?;
        let empty = SelectedEvidence::empty(&claim.id, strategy);
        let evidence = by_id.get(claim.id.as_str()).copied().unwrap_or(&empty);
        let prompt = render_prompt(claim, evidence, template, budget_tokens)?;
        summary.truncated += usize::from(prompt.truncated_evidence);
        summary.empty_evidence += usize::from(prompt.empty_evidence);
        *label_counts.entry(label.as_str().to_string()).or_default() += 1;
        pairs.push(TrainingPair {
            prompt: prompt.text(),
            response: label.as_str().to_string(),
            claim_id: claim.id.clone(),
            strategy: Some(strategy),
        });
    }
    summary.records = pairs.len();
    summary.label_counts = label_counts;
    Ok((pairs, summary))
}

pub fn export_pairs(
    dataset: &Dataset,
    strategy: Strategy,
    selections: &[SelectedEvidence],
    template: &PromptTemplate,
    budget_tokens: usize,
    destination: &Path,
) -> Result<ExportSummary> {
    let (pairs, summary) = build_pairs(dataset, strategy, selections, template, budget_tokens)?;
    jsonl::write_records(destination, &pairs)?;
    Ok(summary)
}

pub fn read_pairs(path: &Path) -> Result<Vec<TrainingPair>> {
    Ok(jsonl::read_records(path)?.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub format_version: u32,
    pub base_model: String,
    pub rank: u32,
    pub alpha: u32,
    pub dropout: f64,
    pub target_projections: Vec<String>,
    pub epochs: u32,
    pub batch_size: u32,
    pub gradient_accumulation: u32,
    pub mixed_precision: bool,
    pub gradient_checkpointing: bool,
    /// Evidence strategy the pairs were exported with.
    pub evidence_strategy: Strategy,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            format_version: ADAPTER_FORMAT_VERSION,
            base_model: DEFAULT_MODEL.into(),
            rank: 8,
            alpha: 16,
            dropout: 0.05,
            target_projections: ["q_proj", "k_proj", "v_proj", "o_proj"].map(String::from).to_vec(),
            epochs: 3,
            batch_size: 2,
            gradient_accumulation: 4,
            mixed_precision: true,
            gradient_checkpointing: true,
            evidence_strategy: Strategy::FullDocument,
        }
    }
}

impl AdapterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != ADAPTER_FORMAT_VERSION {
            return Err(Error::invalid(
                "format_version",
                format!("unsupported version {}", self.format_version),
            ));
        }
        if self.base_model.trim().is_empty() {
            return Err(Error::invalid("base_model", "must not be empty"));
        }
        if self.rank < 1 {
            return Err(Error::invalid("rank", "must be at least 1"));
        }
        if self.alpha < 1 {
            return Err(Error::invalid("alpha", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout", format!("{} must lie in [0, 1)", self.dropout)));
        }
        if self.target_projections.is_empty() {
            return Err(Error::invalid("target_projections", "must name at least one projection"));
        }
        for (field, value) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("gradient_accumulation", self.gradient_accumulation),
        ] {
            if value < 1 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        self.validate()?;
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: AdapterConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

pub fn emit_adapter_config(config: &AdapterConfig, destination: &Path) -> Result<()> {
    let text = config.to_toml()?;
    std::fs::write(destination, text).map_err(|e| Error::io(destination, e))
}

pub fn load_adapter_config(path: &Path) -> Result<AdapterConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AdapterConfig::from_toml(&text)
}
