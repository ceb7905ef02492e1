//! Claims, retrieved evidence documents, and the train/validation split.
//!
//! On-disk layout (UTF-8, one JSON object per line):
//!
//! * claims: `{"id": "c1", "claim": "...", "label": "True", "language": "en"}`
//!   where `label` and `language` are optional.
//! * evidence: `{"claim_id": "c1", "rank": 1, "evidence": "..."}`
//!
//! A `version` field is reserved on both record types and ignored on read.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// Most documents a claim may carry, matching the upstream top-100 retrieval.
pub const MAX_DOCUMENTS_PER_CLAIM: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Label {
    True,
    False,
    Conflicting,
}

impl Label {
    /// Fixed order used for confusion matrix rows and columns.
    pub const ALL: [Label; 3] = [Label::True, Label::False, Label::Conflicting];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::True => "True",
            Label::False => "False",
            Label::Conflicting => "Conflicting",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::True => 0,
            Label::False => 1,
            Label::Conflicting => 2,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "true" => Ok(Label::True),
            "false" => Ok(Label::False),
            "conflicting" => Ok(Label::Conflicting),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

impl TryFrom<String> for Label {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.as_str().to_string()
    }
}

fn default_language() -> String {
    "en".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    #[serde(rename = "claim")]
    pub text: String,
    #[serde(rename = "label", default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<Label>,
    #[serde(default = "default_language")]
    pub language: String,
}

impl Claim {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold_label: Option<Label>) -> Self {
        Claim {
            id: id.into(),
            text: text.into(),
            gold_label,
            language: default_language(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    pub claim_id: String,
    pub rank: u32,
    #[serde(rename = "evidence")]
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 0,
        }
    }
}

/// Claims in file order plus their ranked evidence. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    claims: Vec<Claim>,
    evidence: BTreeMap<String, Vec<EvidenceDocument>>,
}

impl Dataset {
    pub fn new(claims: Vec<Claim>) -> Result<Self> {
        let mut seen = HashSet::new();
        for claim in &claims {
            if claim.text.trim().is_empty() {
                return Err(Error::invalid("claim", format!("claim `{}` has empty text", claim.id)));
            }
            if !seen.insert(claim.id.as_str()) {
                return Err(Error::DuplicateClaim(claim.id.clone()));
            }
        }
        Ok(Dataset {
            claims,
            evidence: BTreeMap::new(),
        })
    }

    pub fn claims(&self) -> &[Claim] {
        &self.claims
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    /// Evidence for a claim, ascending by rank. Empty when none was attached.
    pub fn evidence(&self, claim_id: &str) -> &[EvidenceDocument] {
        self.evidence.get(claim_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn claim(&self, claim_id: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.id == claim_id)
    }

    /// Returns a copy of this dataset with `documents` attached.
    ///
    /// Documents are grouped per claim and sorted by rank. Orphans, repeated
    /// `(claim_id, rank)` pairs, zero ranks, and claims over the 100-document
    /// cap are rejected.
    pub fn with_evidence(&self, documents: Vec<EvidenceDocument>) -> Result<Self> {
        let known: HashSet<&str> = self.claims.iter().map(|c| c.id.as_str()).collect();
        let mut orphans: Vec<String> = documents
            .iter()
            .filter(|d| !known.contains(d.claim_id.as_str()))
            .map(|d| d.claim_id.clone())
            .collect();
        if !orphans.is_empty() {
            orphans.sort();
            orphans.dedup();
            return Err(Error::OrphanEvidence(orphans));
        }

        let mut evidence = self.evidence.clone();
        for doc in documents {
            if doc.rank == 0 {
                return Err(Error::invalid(
                    "rank",
                    format!("claim `{}` has rank 0; ranks start at 1", doc.claim_id),
                ));
            }
            evidence.entry(doc.claim_id.clone()).or_default().push(doc);
        }
        for (claim_id, docs) in evidence.iter_mut() {
            docs.sort_by_key(|d| d.rank);
            if let Some(pair) = docs.windows(2).find(|w| w[0].rank == w[1].rank) {
                return Err(Error::DuplicateRank {
                    claim_id: claim_id.clone(),
                    rank: pair[0].rank,
                });
            }
            if docs.len() > MAX_DOCUMENTS_PER_CLAIM {
                return Err(Error::TooManyDocuments {
                    claim_id: claim_id.clone(),
                    count: docs.len(),
                    max: MAX_DOCUMENTS_PER_CLAIM,
                });
            }
        }
        Ok(Dataset {
            claims: self.claims.clone(),
            evidence,
        })
    }

    /// Subset keeping `claims` order of `self`, with their evidence.
    fn subset(&self, keep: &HashSet<&str>) -> Dataset {
        let claims: Vec<Claim> = self.claims.iter().filter(|c| keep.contains(c.id.as_str())).cloned().collect();
        let evidence = self
            .evidence
            .iter()
            .filter(|(id, _)| keep.contains(id.as_str()))
            .map(|(id, docs)| (id.clone(), docs.clone()))
            .collect();
        Dataset { claims, evidence }
    }

    /// Claim count per label in [`Label::ALL`] order; unlabeled claims are skipped.
    pub fn label_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for label in self.claims.iter().filter_map(|c| c.gold_label) {
            counts[label.index()] += 1;
        }
        counts
    }
}

pub fn ingest_claims(path: &Path) -> Result<Dataset> {
    let records: Vec<(usize, Claim)> = jsonl::read_records(path)?;
    let mut seen = HashSet::new();
    let mut claims = Vec::with_capacity(records.len());
    for (line, claim) in records {
        if claim.id.trim().is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: "empty claim id".into(),
            });
        }
        if claim.text.trim().is_empty() {
            return Err(Error::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("claim `{}` has empty text", claim.id),
            });
        }
        if !seen.insert(claim.id.clone()) {
            return Err(Error::DuplicateClaim(claim.id));
        }
        claims.push(claim);
    }
    Dataset::new(claims)
}

pub fn read_evidence(path: &Path) -> Result<Vec<EvidenceDocument>> {
    Ok(jsonl::read_records(path)?.into_iter().map(|(_, doc)| doc).collect())
}

pub fn attach_evidence(dataset: &Dataset, path: &Path) -> Result<Dataset> {
    dataset.with_evidence(read_evidence(path)?)
}

pub fn write_claims(dataset: &Dataset, path: &Path) -> Result<()> {
    jsonl::write_records(path, dataset.claims())
}

pub fn write_evidence(dataset: &Dataset, path: &Path) -> Result<()> {
    jsonl::write_records(path, dataset.evidence.values().flatten())
}

/// Number of items of a bucket of `count` that go to train. Remainders from a
/// non-integral product go to train.
pub(crate) fn train_quota(count: usize, fraction: f64) -> usize {
    let exact = fraction * count as f64;
    let nearest = exact.round();
    let quota = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    (quota as usize).min(count)
}

/// Splits a fully labeled dataset into (train, validation), preserving each
/// label's share. Buckets are shuffled with a ChaCha8 stream seeded from
/// `spec.seed`; both halves keep the original file order.
pub fn stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(
            "train_fraction",
            format!("{} is outside (0, 1)", spec.train_fraction),
        ));
    }
    let mut buckets: [Vec<&str>; 3] = Default::default();
    for claim in dataset.claims() {
        let label = claim.gold_label.ok_or_else(|| Error::Unlabeled(claim.id.clone()))?;
        buckets[label.index()].push(claim.id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = HashSet::new();
    for bucket in buckets.iter_mut() {
        bucket.shuffle(&mut rng);
        let quota = train_quota(bucket.len(), spec.train_fraction);
        train.extend(bucket[..quota].iter().copied());
    }
    let validation: HashSet<&str> = dataset
        .claims()
        .iter()
        .map(|c| c.id.as_str())
        .filter(|id| !train.contains(id))
        .collect();
    Ok((dataset.subset(&train), dataset.subset(&validation)))
}

/// Lookup helper used by the pipeline when it needs claims by id.
pub(crate) fn index_by_id(dataset: &Dataset) -> HashMap<&str, &Claim> {
    dataset.claims().iter().map(|c| (c.id.as_str(), c)).collect()
}
