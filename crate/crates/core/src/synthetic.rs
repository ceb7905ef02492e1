//! Small generated corpora for tests, benchmarks and demos.
//!
//! Labels cycle True, False, Conflicting. The best-ranked document of a
//! True claim restates it, a False claim's evidence calls it "debunked", and
//! a Conflicting claim only gets loosely related text, which is what the
//! mock backend keys on.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Claim, Dataset, EvidenceDocument, Label};
use crate::error::Result;
use crate::jsonl;

const SUBJECTS: &[&str] = &[
    "unemployment",
    "inflation",
    "GDP",
    "the minimum wage",
    "crime",
    "median rent",
    "tuition",
    "the deficit",
    "vaccination coverage",
    "carbon emissions",
    "voter turnout",
    "the poverty rate",
];
const PLACES: &[&str] = &["Texas", "Ohio", "the UK", "India", "Canada", "Florida", "Kenya", "Brazil"];
const VERBS: &[&str] = &["rose", "fell", "doubled", "grew", "dropped", "climbed"];
const FILLER: &[&str] = &[
    "Officials released the figures on Monday.",
    "Analysts expect revisions later this year.",
    "The survey covered several thousand households.",
    "Critics questioned the methodology.",
    "Local newspapers reported the story widely.",
    "The agency publishes data every quarter.",
    "Some economists urged caution.",
    "Historical records go back several decades.",
];

pub fn dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut claims = Vec::with_capacity(n);
    let mut evidence = Vec::new();
    for i in 0..n {
        let label = Label::ALL[i % 3];
        let subject = SUBJECTS.choose(&mut rng).expect("non-empty");
        let place = PLACES.choose(&mut rng).expect("non-empty");
        let verb = VERBS.choose(&mut rng).expect("non-empty");
        let pct = rng.gen_range(1..60);
        let year = rng.gen_range(1990..2024);
        let text = format!("In {place}, {subject} {verb} by {pct}% in {year}");
        let id = format!("claim-{i:04}");

        let key_sentence = match label {
            Label::True => format!("Official statistics confirm that {text}."),
            Label::False => format!("The claim about {subject} in {place} was debunked by fact-checkers."),
            Label::Conflicting => format!("Reports on {subject} in {place} around {year} disagree with each other."),
        };
        let docs = rng.gen_range(2..5);
        for rank in 1..=docs {
            let mut sentences: Vec<String> = FILLER.choose_multiple(&mut rng, 3).map(|s| s.to_string()).collect();
            if rank == 1 {
                let at = rng.gen_range(0..=sentences.len());
                sentences.insert(at, key_sentence.clone());
            } else {
                sentences.push(format!("In {year}, {subject} changed by about {}%.", rng.gen_range(1..60)));
            }
            evidence.push(EvidenceDocument {
                claim_id: id.clone(),
                rank,
                text: sentences.join(" "),
            });
        }
        claims.push(Claim::new(id, text, Some(label)));
    }
    Dataset::new(claims)
        .and_then(|d| d.with_evidence(evidence))
        .expect("generated data is valid")
}

/// Writes `claims.jsonl` and `evidence.jsonl` under `dir`.
pub fn write(dir: &Path, dataset: &Dataset) -> Result<(PathBuf, PathBuf)> {
    let claims = dir.join("claims.jsonl");
    let evidence = dir.join("evidence.jsonl");
    jsonl::write_records(&claims, dataset.claims())?;
    let docs: Vec<&EvidenceDocument> = dataset.claims().iter().flat_map(|c| dataset.evidence(&c.id)).collect();
    jsonl::write_records(&evidence, docs)?;
    Ok((claims, evidence))
}
