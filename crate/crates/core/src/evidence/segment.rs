//! Rule-based sentence splitting and retrieval tokenization.
//!
//! A sentence ends at `.`, `?` or `!` (plus any closing quotes or brackets)
//! when followed by whitespace and then an uppercase letter or a digit.
//! A period never ends a sentence when the word it closes is a known
//! abbreviation or a dotted initialism such as `U.S.`; decimals never split
//! because the period is not followed by whitespace.

use serde::{Deserialize, Serialize};

use crate::corpus::EvidenceDocument;

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "etc", "inc", "ltd", "co", "corp", "dept", "univ",
    "gov", "sen", "rep", "gen", "col", "lt", "sgt", "capt", "no", "nos", "vol", "fig", "approx", "est", "avg", "min", "max",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "mon", "tue", "wed", "thu", "fri",
    "sat", "sun", "am", "pm", "al", "cf", "ca", "bn", "mn", "pct",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceUnit {
    pub doc_rank: u32,
    pub position: usize,
    pub text: String,
    pub tokens: Vec<String>,
}

impl SentenceUnit {
    pub fn new(doc_rank: u32, position: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        SentenceUnit {
            doc_rank,
            position,
            text,
            tokens,
        }
    }
}

/// Lowercases and splits on every non-alphanumeric character. Numerals are
/// kept as tokens; there is no stemming or stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_abbreviation(word: &str) -> bool {
    let word = word.trim_start_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Dotted initialisms ("U.S", "e.g", "i.e") and lone capital initials ("J").
    let parts: Vec<&str> = word.split('.').collect();
    if parts.len() > 1 && parts.iter().all(|p| p.chars().count() == 1) {
        return true;
    }
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

/// Byte offsets where sentences end (exclusive), excluding the final one.
fn boundaries(text: &str) -> Vec<usize> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (offset, c) = chars[i];
        if !matches!(c, '.' | '?' | '!') {
            i += 1;
            continue;
        }
        let mut end = i + 1;
        while end < chars.len() && (matches!(chars[end].1, '.' | '?' | '!') || CLOSERS.contains(&chars[end].1)) {
            end += 1;
        }
        let mut next = end;
        while next < chars.len() && chars[next].1.is_whitespace() {
            next += 1;
        }
        let followed_by_space = next > end;
        let starts_sentence = next < chars.len()
            && (chars[next].1.is_uppercase()
                || chars[next].1.is_ascii_digit()
                || CLOSERS.contains(&chars[next].1)
                || chars[next].1 == '\u{201c}');
        if followed_by_space && starts_sentence {
            let word_start = text[..offset]
                .rfind(char::is_whitespace)
                .map(|p| p + text[p..].chars().next().map_or(1, char::len_utf8))
                .unwrap_or(0);
            let word = &text[word_start..offset];
            if !(c == '.' && end == i + 1 && is_abbreviation(word)) {
                let cut = chars.get(end).map_or(text.len(), |(o, _)| *o);
                cuts.push(cut);
            }
        }
        i = end;
    }
    cuts
}

/// Splits a document into trimmed, non-empty sentences numbered from 0.
pub fn segment_sentences(document: &EvidenceDocument) -> Vec<SentenceUnit> {
    split_text(&document.text)
        .into_iter()
        .enumerate()
        .map(|(position, text)| SentenceUnit::new(document.rank, position, text))
        .collect()
}

pub fn split_text(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for cut in boundaries(text).into_iter().chain(std::iter::once(text.len())) {
        let piece = text[start..cut].trim();
        if !piece.is_empty() {
            out.push(piece);
        }
        start = cut;
    }
    out
}
