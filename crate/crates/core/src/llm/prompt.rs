use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Claim;
use crate::error::{Error, Result};
use crate::evidence::SelectedEvidence;

pub const CLAIM_PLACEHOLDER: &str = "[CLAIM]";
pub const EVIDENCE_PLACEHOLDER: &str = "[EVIDENCE]";
pub const NO_EVIDENCE_TEXT: &str = "No evidence available.";
pub const CHARS_PER_TOKEN: usize = 4;
pub const DEFAULT_TOKEN_BUDGET: usize = 4096;

const DEFAULT_PREAMBLE: &str = "You are a helpful and concise fact-checking assistant. Given a claim and supporting evidence, your task is to determine the truthfulness of the claim.\nRespond strictly with one of the following labels: True, False, or Conflicting.";
const DEFAULT_BODY: &str = "Claim: [CLAIM]\nEvidence: [EVIDENCE]";
const DEFAULT_CLOSING: &str = "Based on the evidence, what is the correct classification?";

/// Zero-shot fact-checking prompt. The preamble becomes the system message;
/// body and closing question form the user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub preamble: String,
    pub body: String,
    pub closing: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            preamble: DEFAULT_PREAMBLE.into(),
            body: DEFAULT_BODY.into(),
            closing: DEFAULT_CLOSING.into(),
        }
    }
}

impl PromptTemplate {
    /// The template as one string, placeholders unresolved.
    pub fn canonical_text(&self) -> String {
        format!("{}\n\n{}\n{}", self.preamble, self.body, self.closing)
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
    pub truncated_evidence: bool,
    pub empty_evidence: bool,
}

impl RenderedPrompt {
    /// System and user text joined the way the template lays them out.
    pub fn text(&self) -> String {
        join_prompt(&self.system, &self.user)
    }

    pub fn hash(&self) -> String {
        prompt_hash(&self.system, &self.user)
    }
}

pub(crate) fn join_prompt(system: &str, user: &str) -> String {
    if system.is_empty() {
        user.to_string()
    } else {
        format!("{system}\n\n{user}")
    }
}

/// SHA-256 (hex) of the joined system and user text; keys replay fixtures
/// and generation logs.
pub fn prompt_hash(system: &str, user: &str) -> String {
    hex::encode(Sha256::digest(join_prompt(system, user).as_bytes()))
}

/// Single pass over `template`, so placeholder-like text inside the claim or
/// evidence is never substituted again.
fn substitute(template: &str, claim: &str, evidence: &str) -> String {
    let mut out = String::with_capacity(template.len() + claim.len() + evidence.len());
    let mut rest = template;
    loop {
        let next = [(CLAIM_PLACEHOLDER, claim), (EVIDENCE_PLACEHOLDER, evidence)]
            .into_iter()
            .filter_map(|(ph, value)| rest.find(ph).map(|i| (i, ph, value)))
            .min_by_key(|(i, _, _)| *i);
        match next {
            Some((i, ph, value)) => {
                out.push_str(&rest[..i]);
                out.push_str(value);
                rest = &rest[i + ph.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

fn render_with(template: &PromptTemplate, claim: &str, evidence: &str) -> RenderedPrompt {
    let user = format!("{}\n{}", substitute(&template.body, claim, evidence), template.closing);
    RenderedPrompt {
        system: template.preamble.clone(),
        user,
        truncated_evidence: false,
        empty_evidence: false,
    }
}

/// Fills the template with the claim and the selected evidence, one unit per
/// line in score order. When the estimated token count (4 chars per token)
/// exceeds `budget_tokens`, evidence is cut from the end.
pub fn render_prompt(
    claim: &Claim,
    evidence: &SelectedEvidence,
    template: &PromptTemplate,
    budget_tokens: usize,
) -> Result<RenderedPrompt> {
    if claim.text.trim().is_empty() {
        return Err(Error::invalid("claim", format!("claim `{}` has empty text", claim.id)));
    }
    let empty_evidence = evidence.is_empty();
    let evidence_text = if empty_evidence {
        NO_EVIDENCE_TEXT.to_string()
    } else {
        evidence.texts().collect::<Vec<_>>().join("\n")
    };

    let mut rendered = render_with(template, &claim.text, &evidence_text);
    rendered.empty_evidence = empty_evidence;
    let max_chars = budget_tokens.saturating_mul(CHARS_PER_TOKEN);
    let total = rendered.text().chars().count();
    if total > max_chars {
        let evidence_chars = evidence_text.chars().count();
        let keep = evidence_chars.saturating_sub(total - max_chars);
        let cut: String = evidence_text.chars().take(keep).collect();
        rendered = render_with(template, &claim.text, &cut);
        rendered.empty_evidence = empty_evidence;
        rendered.truncated_evidence = true;
    }
    Ok(rendered)
}

/// Rough token count used for the budget.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(CHARS_PER_TOKEN)
}
