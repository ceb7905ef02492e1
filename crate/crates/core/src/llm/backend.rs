//! Chat-completion backends: HTTP, a rule-based mock, and record/replay.
//!
//! The HTTP backend posts
//! `{"model", "messages": [{"role", "content"}], "temperature", "top_p", "max_tokens", "seed"?}`
//! and reads `choices[0].message.content` from the response.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompt::prompt_hash;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::retry::{classify_http, Attempt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    fn content_of(&self, role: &str) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }

    pub fn system(&self) -> &str {
        self.content_of("system")
    }

    pub fn user(&self) -> &str {
        self.content_of("user")
    }

    pub fn prompt_hash(&self) -> String {
        prompt_hash(self.system(), self.user())
    }
}

pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    /// One attempt. Retrying is the caller's job.
    fn complete(&self, request: &ChatRequest) -> Attempt<String>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, request: &ChatRequest) -> Attempt<String> {
        (**self).complete(request)
    }
}

/// Offline stand-in for a model. Reads the `Claim:` and `Evidence:` fields
/// of the user message and answers:
///
/// * `False` when the evidence contains the word "debunked";
/// * `True` when the evidence restates the claim (case- and
///   whitespace-insensitive);
/// * otherwise a hedged sentence that parses as `Conflicting`.
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

pub const MOCK_HEDGE: &str = "The evidence is mixed, so the claim is partially true.";

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl MockBackend {
    pub fn respond(user: &str) -> String {
        let claim = user
            .split_once("Claim: ")
            .map(|(_, rest)| rest.split_once("\nEvidence:").map_or(rest, |(c, _)| c))
            .unwrap_or("");
        let evidence = user.split_once("Evidence: ").map_or("", |(_, rest)| rest);
        let debunked = evidence
            .split(|c: char| !c.is_alphanumeric())
            .any(|w| w.eq_ignore_ascii_case("debunked"));
        if debunked {
            return "False".into();
        }
        let claim = normalize(claim);
        if !claim.is_empty() && normalize(evidence).contains(&claim) {
            return "True".into();
        }
        MOCK_HEDGE.into()
    }
}

impl ChatBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ChatRequest) -> Attempt<String> {
        Attempt::Done(Self::respond(request.user()))
    }
}

/// One line of a replay fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub prompt_hash: String,
    pub response: String,
}

/// Answers from a fixture keyed by prompt hash; unknown prompts fail permanently.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: BTreeMap<String, String>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<(usize, RecordedResponse)> = jsonl::read_records(path)?;
        Ok(ReplayBackend {
            responses: records.into_iter().map(|(_, r)| (r.prompt_hash, r.response)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &ChatRequest) -> Attempt<String> {
        let hash = request.prompt_hash();
        match self.responses.get(&hash) {
            Some(text) => Attempt::Done(text.clone()),
            None => Attempt::Fail(format!("no recorded response for prompt {hash}")),
        }
    }
}

/// Wraps a backend and remembers every successful answer for later replay.
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    /// Writes the fixture sorted by prompt hash.
    pub fn save(&self, path: &Path) -> Result<()> {
        let recorded = self.recorded.lock().expect("recording lock poisoned");
        let records: Vec<RecordedResponse> = recorded
            .iter()
            .map(|(h, r)| RecordedResponse {
                prompt_hash: h.clone(),
                response: r.clone(),
            })
            .collect();
        jsonl::write_records(path, &records)
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, request: &ChatRequest) -> Attempt<String> {
        let outcome = self.inner.complete(request);
        if let Attempt::Done(text) = &outcome {
            self.recorded
                .lock()
                .expect("recording lock poisoned")
                .insert(request.prompt_hash(), text.clone());
        }
        outcome
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    /// Environment variable holding a bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    60_000
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct HttpChatBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| Error::Config(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(HttpChatBackend { config, api_key, agent })
    }
}

impl ChatBackend for HttpChatBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> Attempt<String> {
        let mut call = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(request) {
            Ok(resp) => match resp.into_json::<ChatResponse>() {
                Ok(parsed) => match parsed.choices.into_iter().next() {
                    Some(choice) => Attempt::Done(choice.message.content.unwrap_or_default()),
                    None => Attempt::Retry("response had no choices".into()),
                },
                Err(e) => Attempt::Retry(format!("unreadable response: {e}")),
            },
            Err(err) => classify_http(err),
        }
    }
}
