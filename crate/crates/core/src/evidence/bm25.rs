//! Okapi BM25 over the sentences of one claim's retrieved documents.
//!
//! IDF uses the non-negative `ln(1 + (N - df + 0.5) / (df + 0.5))` form, so a
//! term present in every sentence still contributes a small positive weight.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::segment::SentenceUnit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(crate::Error::invalid("k1", format!("{} must be positive", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(crate::Error::invalid("b", format!("{} must lie in [0, 1]", self.b)));
        }
        Ok(())
    }
}

/// Sentence count, per-term sentence frequency and mean token length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub doc_freq: HashMap<String, usize>,
    pub avg_len: f64,
}

impl CorpusStats {
    pub fn from_sentences<'a, I>(sentences: I) -> Self
    where
        I: IntoIterator<Item = &'a SentenceUnit>,
    {
        let mut stats = CorpusStats::default();
        let mut total_len = 0usize;
        for sentence in sentences {
            stats.sentence_count += 1;
            total_len += sentence.tokens.len();
            let distinct: HashSet<&str> = sentence.tokens.iter().map(String::as_str).collect();
            for term in distinct {
                *stats.doc_freq.entry(term.to_string()).or_default() += 1;
            }
        }
        if stats.sentence_count > 0 {
            stats.avg_len = total_len as f64 / stats.sentence_count as f64;
        }
        stats
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.sentence_count as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

/// BM25 score of one sentence for the claim's tokens. Repeated claim tokens
/// count once; an empty claim scores 0.
pub fn bm25_score(claim_tokens: &[String], sentence: &SentenceUnit, stats: &CorpusStats, params: &Bm25Params) -> f64 {
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for token in &sentence.tokens {
        *tf.entry(token.as_str()).or_default() += 1;
    }
    let len_ratio = if stats.avg_len > 0.0 {
        sentence.tokens.len() as f64 / stats.avg_len
    } else {
        1.0
    };
    let norm = params.k1 * (1.0 - params.b + params.b * len_ratio);

    let mut seen = HashSet::new();
    claim_tokens
        .iter()
        .filter(|t| seen.insert(t.as_str()))
        .filter_map(|t| tf.get(t.as_str()).map(|&f| (t, f as f64)))
        .map(|(t, f)| stats.idf(t) * f * (params.k1 + 1.0) / (f + norm))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::segment::tokenize;

    #[test]
    fn no_shared_tokens_scores_zero() {
        let s = SentenceUnit::new(1, 0, "inflation rose sharply");
        let stats = CorpusStats::from_sentences([&s]);
        let score = bm25_score(&tokenize("unemployment fell"), &s, &stats, &Bm25Params::default());
        assert_eq!(score, 0.0);
    }

    #[test]
    fn single_sentence_hand_value() {
        // N = 1, df = 1, tf = 1, |s| = avg_len.
        let s = SentenceUnit::new(1, 0, "gdp grew");
        let stats = CorpusStats::from_sentences([&s]);
        let score = bm25_score(&tokenize("gdp"), &s, &stats, &Bm25Params::default());
        let expected = (4.0f64 / 3.0).ln() * 2.2 / 2.2;
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");
        assert!((score - 0.287_682_072_451_780_9).abs() < 1e-12);
    }

    #[test]
    fn empty_claim_scores_zero() {
        let s = SentenceUnit::new(1, 0, "gdp grew");
        let stats = CorpusStats::from_sentences([&s]);
        assert_eq!(bm25_score(&[], &s, &stats, &Bm25Params::default()), 0.0);
    }

    #[test]
    fn duplicate_claim_tokens_count_once() {
        let s = SentenceUnit::new(1, 0, "gdp grew");
        let stats = CorpusStats::from_sentences([&s]);
        let p = Bm25Params::default();
        assert_eq!(
            bm25_score(&tokenize("gdp gdp gdp"), &s, &stats, &p),
            bm25_score(&tokenize("gdp"), &s, &stats, &p)
        );
    }

    #[test]
    fn param_validation() {
        assert!(Bm25Params::default().validate().is_ok());
        assert!(Bm25Params { k1: 0.0, b: 0.5 }.validate().is_err());
        assert!(Bm25Params { k1: 1.0, b: 1.5 }.validate().is_err());
    }
}
