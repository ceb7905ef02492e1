//! Prompt rendering, chat-completion calls and bounded batch generation.

pub mod backend;
pub mod prompt;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::retry::RetryPolicy;

pub use backend::{
    ChatBackend, ChatMessage, ChatRequest, HttpBackendConfig, HttpChatBackend, MockBackend, RecordedResponse, RecordingBackend,
    ReplayBackend,
};
pub use prompt::{prompt_hash, render_prompt, PromptTemplate, RenderedPrompt, DEFAULT_TOKEN_BUDGET};

pub const DEFAULT_MODEL: &str = "meta-llama/Llama-3.1-8B-Instruct";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub model_name: String,
    /// Forwarded to backends that accept a sampling seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.3,
            top_p: 0.9,
            max_new_tokens: 30,
            model_name: DEFAULT_MODEL.into(),
            seed: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature", format!("{} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::invalid("top_p", format!("{} must lie in (0, 1]", self.top_p)));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens", "must be at least 1"));
        }
        Ok(())
    }

    pub fn request(&self, prompt: &RenderedPrompt) -> ChatRequest {
        let mut messages = Vec::with_capacity(2);
        if !prompt.system.is_empty() {
            messages.push(ChatMessage {
                role: "system".into(),
                content: prompt.system.clone(),
            });
        }
        messages.push(ChatMessage {
            role: "user".into(),
            content: prompt.user.clone(),
        });
        ChatRequest {
            model: self.model_name.clone(),
            messages,
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_new_tokens,
            seed: self.seed,
        }
    }
}

/// One generation. `raw_text` is stored exactly as the backend returned it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub claim_id: String,
    pub prompt_hash: String,
    pub raw_text: String,
    pub latency_ms: f64,
    pub backend: String,
    pub truncated_evidence: bool,
}

/// One line of the generation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLogRecord {
    #[serde(flatten)]
    pub result: GenerationResult,
    pub params: GenerationParams,
}

pub fn generate<B: ChatBackend + ?Sized>(
    claim_id: &str,
    prompt: &RenderedPrompt,
    params: &GenerationParams,
    backend: &B,
    retry: &RetryPolicy,
) -> Result<GenerationResult> {
    let request = params.request(prompt);
    let started = Instant::now();
    let raw_text = retry
        .run(|| backend.complete(&request))
        .map_err(|(attempts, message)| Error::Generation {
            claim_id: claim_id.to_string(),
            attempts,
            message,
        })?;
    Ok(GenerationResult {
        claim_id: claim_id.to_string(),
        prompt_hash: request.prompt_hash(),
        raw_text,
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
        backend: backend.name().to_string(),
        truncated_evidence: prompt.truncated_evidence,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub claim_id: String,
    pub prompt: RenderedPrompt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub concurrency: usize,
    /// Abort when the failed share of the batch exceeds this.
    pub max_failure_rate: f64,
    pub retry: RetryPolicy,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            concurrency: 4,
            max_failure_rate: 0.2,
            retry: RetryPolicy::generation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub claim_id: String,
    pub message: String,
}

/// Generates for every item with at most `concurrency` requests in flight.
/// Results come back in input order; per-item failures are kept in place.
pub fn run_batch<B: ChatBackend + ?Sized>(
    items: &[BatchItem],
    params: &GenerationParams,
    backend: &B,
    options: &BatchOptions,
) -> Result<Vec<std::result::Result<GenerationResult, GenerationFailure>>> {
    if options.concurrency == 0 {
        return Err(Error::invalid("concurrency", "must be at least 1"));
    }
    params.validate()?;
    let results = par::map_bounded(items, options.concurrency, |item| {
        generate(&item.claim_id, &item.prompt, params, backend, &options.retry).map_err(|e| GenerationFailure {
            claim_id: item.claim_id.clone(),
            message: e.to_string(),
        })
    });
    let failed = results.iter().filter(|r| r.is_err()).count();
    if !results.is_empty() && failed as f64 / results.len() as f64 > options.max_failure_rate {
        return Err(Error::BatchAborted {
            failed,
            total: results.len(),
            threshold: options.max_failure_rate,
        });
    }
    for failure in results.iter().filter_map(|r| r.as_ref().err()) {
        tracing::warn!(claim_id = %failure.claim_id, message = %failure.message, "generation failed");
    }
    Ok(results)
}
