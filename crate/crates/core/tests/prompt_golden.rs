use claimcheck::evidence::{EvidenceUnit, SelectedEvidence, Strategy};
use claimcheck::llm::prompt::{estimate_tokens, render_prompt, PromptTemplate, NO_EVIDENCE_TEXT};
use claimcheck::Claim;

const TEMPLATE_SHA256: &str = "10160cc440b9d4ed5a8758542beeb92a54ae324c8d2ae9789fb2e12d81982719";

fn evidence(texts: &[&str]) -> SelectedEvidence {
    SelectedEvidence {
        claim_id: "c".into(),
        strategy: Strategy::TopKBm25,
        units: texts
            .iter()
            .enumerate()
            .map(|(i, t)| EvidenceUnit {
                doc_rank: 1,
                position: Some(i),
                text: t.to_string(),
            })
            .collect(),
        scores: texts.iter().map(|_| 1.0).collect(),
    }
}

#[test]
fn default_template_renders_golden_text() {
    let claim = Claim::new("c", "X", None);
    let rendered = render_prompt(&claim, &evidence(&["Y"]), &PromptTemplate::default(), 4096).unwrap();
    assert_eq!(rendered.text(), include_str!("fixtures/default_prompt.golden.txt"));
    assert!(!rendered.truncated_evidence && !rendered.empty_evidence);
}

#[test]
fn template_hash_is_pinned() {
    assert_eq!(PromptTemplate::default().hash(), TEMPLATE_SHA256);
}

#[test]
fn oversized_evidence_is_truncated_to_budget() {
    let long = "Numbers rose sharply. ".repeat(2000);
    let claim = Claim::new("c", "Inflation doubled in 2021", None);
    let rendered = render_prompt(&claim, &evidence(&[&long]), &PromptTemplate::default(), 4096).unwrap();
    assert!(estimate_tokens(&long) > 10_000);
    assert!(rendered.truncated_evidence);
    assert!(estimate_tokens(&rendered.text()) <= 4096);
    assert!(rendered.user.contains("Claim: Inflation doubled in 2021\n"));
    assert!(rendered
        .user
        .ends_with("Based on the evidence, what is the correct classification?"));
}

#[test]
fn empty_evidence_uses_placeholder_text() {
    let claim = Claim::new("c", "X", None);
    let rendered = render_prompt(&claim, &evidence(&[]), &PromptTemplate::default(), 4096).unwrap();
    assert!(rendered.empty_evidence);
    assert!(rendered.user.contains(NO_EVIDENCE_TEXT));
}

#[test]
fn placeholders_in_claim_are_not_expanded() {
    let claim = Claim::new("c", "Says [EVIDENCE] here", None);
    let rendered = render_prompt(&claim, &evidence(&["E"]), &PromptTemplate::default(), 4096).unwrap();
    assert!(rendered.user.starts_with("Claim: Says [EVIDENCE] here\nEvidence: E\n"));
}
