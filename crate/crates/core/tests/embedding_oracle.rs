//! Checks against values produced by an independent high-precision script.

use claimcheck::embedding::{cosine_similarity, EmbeddingVector, StubEmbedder};
use claimcheck::evidence::select_top_k_semantic;
use claimcheck::{Claim, EvidenceDocument, SelectionConfig};
use proptest::prelude::*;
use serde::Deserialize;

#[derive(Deserialize)]
struct Oracle {
    abc: Vec<f64>,
    semantic_fixture: SemanticFixture,
    cosine_pairs: Vec<CosinePair>,
}

#[derive(Deserialize)]
struct SemanticFixture {
    claim: String,
    sentences: Vec<String>,
    ranking: Vec<String>,
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct CosinePair {
    u: Vec<f64>,
    v: Vec<f64>,
    cosine: f64,
}

fn oracle() -> Oracle {
    serde_json::from_str(include_str!("fixtures/embedding_oracle.json")).unwrap()
}

#[test]
fn stub_vector_for_abc_matches_documented_construction() {
    let got = StubEmbedder::default().vector("abc");
    let want = oracle().abc;
    assert_eq!(got.dimension(), want.len());
    for (g, w) in got.values().iter().zip(&want) {
        assert!((g - w).abs() < 1e-15, "{g} vs {w}");
    }
}

#[test]
fn cosine_matches_high_precision_reference() {
    for pair in oracle().cosine_pairs {
        assert_eq!(pair.u.len(), 384);
        let got = cosine_similarity(&EmbeddingVector(pair.u), &EmbeddingVector(pair.v)).unwrap();
        assert!((got - pair.cosine).abs() < 1e-9, "{got} vs {}", pair.cosine);
    }
}

#[test]
fn five_sentence_semantic_fixture() {
    let fixture = oracle().semantic_fixture;
    let doc = EvidenceDocument {
        claim_id: "c".into(),
        rank: 1,
        text: fixture.sentences.join(" "),
    };
    let claim = Claim::new("c", fixture.claim, None);
    let config = SelectionConfig {
        k: 5,
        ..Default::default()
    };
    let sel = select_top_k_semantic(&claim, &[doc], &config, &StubEmbedder::default()).unwrap();
    let texts: Vec<&str> = sel.texts().collect();
    assert_eq!(texts, fixture.ranking);
    for (g, w) in sel.scores.iter().zip(&fixture.scores) {
        assert!((g - w).abs() < 1e-9);
    }
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, dim)
}

proptest! {
    #[test]
    fn cosine_symmetric_bounded_scale_invariant(
        (u, v) in (1usize..64).prop_flat_map(|d| (vector(d), vector(d))),
        alpha in 1e-3f64..1e3,
    ) {
        let (u, v) = (EmbeddingVector(u), EmbeddingVector(v));
        let uv = cosine_similarity(&u, &v).unwrap();
        prop_assert_eq!(uv, cosine_similarity(&v, &u).unwrap());
        prop_assert!(uv.abs() <= 1.0 + 1e-12);
        let scaled = EmbeddingVector(u.0.iter().map(|x| x * alpha).collect());
        prop_assert!((cosine_similarity(&scaled, &v).unwrap() - uv).abs() < 1e-9);
    }

    #[test]
    fn self_similarity_is_one(u in vector(16)) {
        prop_assume!(u.iter().any(|x| *x != 0.0));
        let u = EmbeddingVector(u);
        prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let neg = EmbeddingVector(u.0.iter().map(|x| -x).collect());
        prop_assert!((cosine_similarity(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
    }
}
