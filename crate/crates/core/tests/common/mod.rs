//! Test-only oracles. Nothing here calls into the scoring or counting code
//! it is used to check.

#![allow(dead_code)]

pub mod server;

use std::collections::HashSet;

use claimcheck::{EvidenceDocument, Label};
use rand::Rng;

/// A corpus built sentence by sentence so the expected tokens are known
/// without running the tokenizer or segmenter.
#[derive(Debug, Clone)]
pub struct RandomCorpus {
    pub claim_tokens: Vec<String>,
    pub documents: Vec<EvidenceDocument>,
    /// (doc_rank, position, tokens), in document then sentence order.
    pub sentences: Vec<(u32, usize, Vec<String>)>,
}

impl RandomCorpus {
    pub fn claim_text(&self) -> String {
        self.claim_tokens.join(" ")
    }
}

/// Up to `max_sentences` sentences over a vocabulary of `vocab` words
/// `w0..w{vocab-1}`, spread over 1-4 documents.
pub fn random_corpus<R: Rng>(rng: &mut R, max_sentences: usize, vocab: usize) -> RandomCorpus {
    let n_sentences = rng.gen_range(1..=max_sentences);
    let n_docs = rng.gen_range(1..=4.min(n_sentences));
    let mut per_doc = vec![1usize; n_docs];
    for _ in n_docs..n_sentences {
        per_doc[rng.gen_range(0..n_docs)] += 1;
    }
    let mut documents = Vec::new();
    let mut sentences = Vec::new();
    for (d, count) in per_doc.into_iter().enumerate() {
        let rank = d as u32 + 1;
        let mut texts = Vec::new();
        for position in 0..count {
            let len = rng.gen_range(1..=10);
            let tokens: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect();
            let mut words = tokens.clone();
            words[0] = words[0].to_uppercase();
            texts.push(format!("{}.", words.join(" ")));
            sentences.push((rank, position, tokens));
        }
        documents.push(EvidenceDocument {
            claim_id: "c".into(),
            rank,
            text: texts.join(" "),
        });
    }
    let claim_len = rng.gen_range(1..=6);
    let claim_tokens = (0..claim_len).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect();
    RandomCorpus {
        claim_tokens,
        documents,
        sentences,
    }
}

/// Okapi BM25 recomputed from scratch for sentence `target`: every statistic
/// is obtained by rescanning the raw token lists.
pub fn brute_force_bm25(claim: &[String], sentences: &[Vec<String>], target: usize, k1: f64, b: f64) -> f64 {
    let n = sentences.len() as f64;
    let total: usize = sentences.iter().map(|s| s.len()).sum();
    let avg = total as f64 / n;
    let doc = &sentences[target];
    let mut distinct: Vec<&String> = Vec::new();
    for t in claim {
        if !distinct.contains(&t) {
            distinct.push(t);
        }
    }
    let mut score = 0.0;
    for term in distinct {
        let tf = doc.iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = sentences.iter().filter(|s| s.contains(term)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let denom = tf + k1 * (1.0 - b + b * doc.len() as f64 / avg);
        score += idf * tf * (k1 + 1.0) / denom;
    }
    score
}

/// Indices of the top `k` entries: descending score, then lower doc rank,
/// then lower position. Selection sort, no library sorting.
pub fn oracle_top_k(scores: &[f64], keys: &[(u32, usize)], k: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..scores.len()).collect();
    let mut picked = Vec::new();
    while picked.len() < k && !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            let (a, c) = (remaining[i], remaining[best]);
            let better = scores[a] > scores[c] || (scores[a] == scores[c] && keys[a] < keys[c]);
            if better {
                best = i;
            }
        }
        picked.push(remaining.remove(best));
    }
    picked
}

/// Per-class tally computed pair by pair, without a confusion matrix.
pub fn tally_f1(gold: &[Label], predicted: &[Label]) -> ([f64; 3], f64) {
    let mut f1 = [0.0; 3];
    for (slot, label) in [Label::True, Label::False, Label::Conflicting].iter().enumerate() {
        let mut tp = 0u32;
        let mut fp = 0u32;
        let mut fn_ = 0u32;
        for (g, p) in gold.iter().zip(predicted) {
            match (g == label, p == label) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        f1[slot] = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
    }
    (f1, (f1[0] + f1[1] + f1[2]) / 3.0)
}

pub fn label_from_index(i: usize) -> Label {
    [Label::True, Label::False, Label::Conflicting][i % 3]
}

pub fn distinct_count(items: &[String]) -> usize {
    items.iter().collect::<HashSet<_>>().len()
}
