//! Evidence selection: the full top-ranked document, or the top-k sentences
//! of the claim's best documents ranked by BM25 or by embedding similarity.

pub mod bm25;
pub mod segment;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Claim, Dataset, EvidenceDocument};
use crate::embedding::{cosine_similarity, embed_all, Embedder};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub use bm25::{bm25_score, Bm25Params, CorpusStats};
pub use segment::{segment_sentences, tokenize, SentenceUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FullDocument,
    TopKBm25,
    TopKSemantic,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::FullDocument, Strategy::TopKBm25, Strategy::TopKSemantic];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FullDocument => "full-document",
            Strategy::TopKBm25 => "top-k-bm25",
            Strategy::TopKSemantic => "top-k-semantic",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "full-document" | "full" => Ok(Strategy::FullDocument),
            "top-k-bm25" | "bm25" => Ok(Strategy::TopKBm25),
            "top-k-semantic" | "semantic" | "minilm" => Ok(Strategy::TopKSemantic),
            _ => Err(Error::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub k: usize,
    /// How many of the best-ranked documents feed sentence selection.
    pub max_documents: usize,
    pub bm25: Bm25Params,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            k: 3,
            max_documents: 10,
            bm25: Bm25Params::default(),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k", "must be at least 1"));
        }
        if self.max_documents == 0 {
            return Err(Error::invalid("max_documents", "must be at least 1"));
        }
        self.bm25.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceUnit {
    pub doc_rank: u32,
    /// Sentence index within the document; `None` for whole documents.
    pub position: Option<usize>,
    pub text: String,
}

/// Evidence chosen for one claim. `scores[i]` belongs to `units[i]` and the
/// list is non-increasing. A whole document carries `1 / rank`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedEvidence {
    pub claim_id: String,
    pub strategy: Strategy,
    pub units: Vec<EvidenceUnit>,
    pub scores: Vec<f64>,
}

impl SelectedEvidence {
    pub fn empty(claim_id: &str, strategy: Strategy) -> Self {
        SelectedEvidence {
            claim_id: claim_id.to_string(),
            strategy,
            units: Vec::new(),
            scores: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(|u| u.text.as_str())
    }

    pub fn to_record(&self) -> SelectionRecord {
        SelectionRecord {
            claim_id: self.claim_id.clone(),
            strategy: self.strategy,
            evidence: self.texts().map(str::to_string).collect(),
            scores: self.scores.clone(),
            doc_ranks: self.units.iter().map(|u| u.doc_rank).collect(),
        }
    }
}

/// One line of a selections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub claim_id: String,
    pub strategy: Strategy,
    pub evidence: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default)]
    pub doc_ranks: Vec<u32>,
}

impl From<SelectionRecord> for SelectedEvidence {
    fn from(record: SelectionRecord) -> Self {
        let units = record
            .evidence
            .into_iter()
            .enumerate()
            .map(|(i, text)| EvidenceUnit {
                doc_rank: record.doc_ranks.get(i).copied().unwrap_or(0),
                position: None,
                text,
            })
            .collect();
        SelectedEvidence {
            claim_id: record.claim_id,
            strategy: record.strategy,
            units,
            scores: record.scores,
        }
    }
}

fn top_documents(documents: &[EvidenceDocument], max_documents: usize) -> Vec<&EvidenceDocument> {
    let mut docs: Vec<&EvidenceDocument> = documents.iter().collect();
    docs.sort_by_key(|d| d.rank);
    docs.truncate(max_documents);
    docs
}

fn sentences_of(documents: &[EvidenceDocument], max_documents: usize) -> Vec<SentenceUnit> {
    top_documents(documents, max_documents)
        .into_iter()
        .flat_map(segment_sentences)
        .collect()
}

/// Highest score first; ties go to the better-ranked document, then the
/// earlier sentence.
fn rank_order(a: &(f64, &SentenceUnit), b: &(f64, &SentenceUnit)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(a.1.doc_rank.cmp(&b.1.doc_rank))
        .then(a.1.position.cmp(&b.1.position))
}

fn take_top_k(claim_id: &str, strategy: Strategy, mut scored: Vec<(f64, &SentenceUnit)>, k: usize) -> SelectedEvidence {
    scored.sort_by(rank_order);
    scored.truncate(k);
    SelectedEvidence {
        claim_id: claim_id.to_string(),
        strategy,
        scores: scored.iter().map(|(s, _)| *s).collect(),
        units: scored
            .into_iter()
            .map(|(_, s)| EvidenceUnit {
                doc_rank: s.doc_rank,
                position: Some(s.position),
                text: s.text.clone(),
            })
            .collect(),
    }
}

pub fn select_full_document(claim: &Claim, documents: &[EvidenceDocument]) -> Result<SelectedEvidence> {
    let best = documents
        .iter()
        .min_by_key(|d| d.rank)
        .ok_or_else(|| Error::MissingEvidence(claim.id.clone()))?;
    Ok(SelectedEvidence {
        claim_id: claim.id.clone(),
        strategy: Strategy::FullDocument,
        units: vec![EvidenceUnit {
            doc_rank: best.rank,
            position: None,
            text: best.text.clone(),
        }],
        scores: vec![1.0 / best.rank as f64],
    })
}

/// BM25 top-k over the sentences of the claim's best `max_documents`
/// documents. Corpus statistics are local to this claim.
pub fn select_top_k_bm25(claim: &Claim, documents: &[EvidenceDocument], config: &SelectionConfig) -> SelectedEvidence {
    let sentences = sentences_of(documents, config.max_documents);
    let stats = CorpusStats::from_sentences(&sentences);
    let claim_tokens = tokenize(&claim.text);
    if claim_tokens.is_empty() {
        tracing::warn!(claim_id = %claim.id, "claim has no tokens; all BM25 scores are 0");
    }
    let scored = sentences
        .iter()
        .map(|s| (bm25_score(&claim_tokens, s, &stats, &config.bm25), s))
        .collect();
    take_top_k(&claim.id, Strategy::TopKBm25, scored, config.k)
}

/// Top-k sentences by cosine similarity between claim and sentence embeddings.
pub fn select_top_k_semantic<E: Embedder + ?Sized>(
    claim: &Claim,
    documents: &[EvidenceDocument],
    config: &SelectionConfig,
    embedder: &E,
) -> Result<SelectedEvidence> {
    let sentences = sentences_of(documents, config.max_documents);
    if sentences.is_empty() {
        return Ok(SelectedEvidence::empty(&claim.id, Strategy::TopKSemantic));
    }
    let texts: Vec<String> = std::iter::once(claim.text.clone())
        .chain(sentences.iter().map(|s| s.text.clone()))
        .collect();
    let vectors = embed_all(embedder, &texts).map_err(|failure| Error::Embedding {
        claim_id: claim.id.clone(),
        batch: failure.batch,
        source: Box::new(failure.source),
    })?;
    let (claim_vec, sentence_vecs) = vectors.split_first().expect("claim vector present");
    let scored = sentences
        .iter()
        .zip(sentence_vecs)
        .map(|(s, v)| cosine_similarity(claim_vec, v).map(|sim| (sim, s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(take_top_k(&claim.id, Strategy::TopKSemantic, scored, config.k))
}

/// Dispatches on `strategy`. A semantic selection without an embedder is a
/// configuration error.
pub fn select(
    claim: &Claim,
    documents: &[EvidenceDocument],
    strategy: Strategy,
    config: &SelectionConfig,
    embedder: Option<&dyn Embedder>,
) -> Result<SelectedEvidence> {
    match strategy {
        Strategy::FullDocument => select_full_document(claim, documents),
        Strategy::TopKBm25 => Ok(select_top_k_bm25(claim, documents, config)),
        Strategy::TopKSemantic => {
            let embedder = embedder.ok_or_else(|| Error::Config("semantic selection needs an embedder".into()))?;
            select_top_k_semantic(claim, documents, config, embedder)
        }
    }
}

/// Runs selection for every claim of `dataset`, one result per claim in
/// dataset order.
pub fn select_all(
    dataset: &Dataset,
    strategy: Strategy,
    config: &SelectionConfig,
    embedder: Option<&dyn Embedder>,
    execution: Execution,
) -> Vec<Result<SelectedEvidence>> {
    par::map(dataset.claims(), execution, |claim| {
        select(claim, dataset.evidence(&claim.id), strategy, config, embedder)
    })
}
