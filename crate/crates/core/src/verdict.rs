//! Maps free-text model output onto a [`Label`].
//!
//! Every rule is a case-insensitive phrase matched on word boundaries. The
//! match starting earliest in the text wins; at the same start the longest
//! phrase wins, so "half false" shadows "false". Remaining ties go to the
//! lower `priority` value. Text with no match falls back to `Conflicting`.
//!
//! Rule files hold one rule per line, `<priority> <label> <phrase...>`,
//! with `#` comments and blank lines ignored.

use std::ops::Range;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::llm::GenerationResult;

pub const FALLBACK_LABEL: Label = Label::Conflicting;

const DEFAULT_RULES: &[(&str, Label)] = &[
    ("partially true", Label::Conflicting),
    ("partially false", Label::Conflicting),
    ("half true", Label::Conflicting),
    ("half false", Label::Conflicting),
    ("somewhat true", Label::Conflicting),
    ("somewhat false", Label::Conflicting),
    ("mostly true", Label::Conflicting),
    ("mostly false", Label::Conflicting),
    ("mixture", Label::Conflicting),
    ("mixed", Label::Conflicting),
    ("conflicting", Label::Conflicting),
    ("true", Label::True),
    ("false", Label::False),
];

#[derive(Debug, Clone)]
pub struct ParseRule {
    pub id: String,
    pub pattern: String,
    pub target: Label,
    pub priority: u32,
    regex: Regex,
}

impl ParseRule {
    pub fn new(pattern: &str, target: Label, priority: u32) -> Result<Self> {
        let words: Vec<String> = pattern.split_whitespace().map(regex::escape).collect();
        if words.is_empty() {
            return Err(Error::invalid("pattern", "empty parse rule"));
        }
        let source = format!(r"(?i)\b{}\b", words.join(r"[\s\-]+"));
        let regex = Regex::new(&source).map_err(|e| Error::invalid("pattern", e.to_string()))?;
        Ok(ParseRule {
            id: format!("{}:{}", target.as_str().to_lowercase(), words.join(" ").to_lowercase()),
            pattern: pattern.to_string(),
            target,
            priority,
            regex,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<ParseRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        let rules = DEFAULT_RULES
            .iter()
            .enumerate()
            .map(|(i, (pattern, label))| ParseRule::new(pattern, *label, i as u32).expect("default rules compile"))
            .collect();
        RuleSet { rules }
    }
}

impl RuleSet {
    pub fn new(mut rules: Vec<ParseRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::invalid("rules", "rule set is empty"));
        }
        rules.sort_by_key(|r| r.priority);
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[ParseRule] {
        &self.rules
    }

    pub fn from_config(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, char::is_whitespace);
            let (Some(priority), Some(label), Some(pattern)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Config(format!(
                    "rule line {}: expected `<priority> <label> <phrase>`",
                    idx + 1
                )));
            };
            let priority = priority
                .parse()
                .map_err(|_| Error::Config(format!("rule line {}: bad priority `{priority}`", idx + 1)))?;
            rules.push(ParseRule::new(pattern.trim(), label.parse()?, priority)?);
        }
        RuleSet::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_config(&text)
    }

    /// Renders the rule set in the config-file format.
    pub fn to_config(&self) -> String {
        self.rules
            .iter()
            .map(|r| format!("{} {} {}\n", r.priority, r.target, r.pattern))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedVerdict {
    pub label: Label,
    /// Character (not byte) range of the matched phrase.
    pub matched_span: Option<Range<usize>>,
    pub rule_id: Option<String>,
    pub fallback_used: bool,
}

pub fn parse_verdict(raw_text: &str, rules: &RuleSet) -> ParsedVerdict {
    let best = rules
        .rules
        .iter()
        .filter_map(|rule| rule.regex.find(raw_text).map(|m| (m.start(), m.end(), rule)))
        .min_by(|a, b| {
            a.0.cmp(&b.0)
                .then((b.1 - b.0).cmp(&(a.1 - a.0)))
                .then(a.2.priority.cmp(&b.2.priority))
        });
    match best {
        Some((start, end, rule)) => {
            let char_start = raw_text[..start].chars().count();
            let char_end = char_start + raw_text[start..end].chars().count();
            ParsedVerdict {
                label: rule.target,
                matched_span: Some(char_start..char_end),
                rule_id: Some(rule.id.clone()),
                fallback_used: false,
            }
        }
        None => ParsedVerdict {
            label: FALLBACK_LABEL,
            matched_span: None,
            rule_id: None,
            fallback_used: true,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub claim_id: String,
    #[serde(flatten)]
    pub verdict: ParsedVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedBatch {
    pub verdicts: Vec<VerdictRecord>,
    pub fallback_rate: f64,
}

pub fn parse_batch(results: &[GenerationResult], rules: &RuleSet) -> ParsedBatch {
    let verdicts: Vec<VerdictRecord> = results
        .iter()
        .map(|r| VerdictRecord {
            claim_id: r.claim_id.clone(),
            verdict: parse_verdict(&r.raw_text, rules),
        })
        .collect();
    let fallbacks = verdicts.iter().filter(|v| v.verdict.fallback_used).count();
    let fallback_rate = if verdicts.is_empty() {
        0.0
    } else {
        fallbacks as f64 / verdicts.len() as f64
    };
    ParsedBatch { verdicts, fallback_rate }
}
