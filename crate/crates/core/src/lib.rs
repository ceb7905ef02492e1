//! Numerical claim verification against retrieved evidence.
//!
//! The crate selects evidence for each claim (whole top document, BM25 top-k
//! sentences, or embedding top-k sentences), asks an instruction-tuned chat
//! model for a verdict, normalizes the answer to `True` / `False` /
//! `Conflicting`, and scores runs with class-wise and macro-averaged F1. It
//! also exports prompt/response pairs and adapter settings for LoRA
//! fine-tuning.
//!
//! Per-claim selection and batched generation run on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod evidence;
pub mod export;
pub mod jsonl;
pub mod llm;
pub mod par;
pub mod pipeline;
pub mod retry;
pub mod synthetic;
pub mod verdict;

pub use corpus::{Claim, Dataset, EvidenceDocument, Label, SplitSpec};
pub use error::{Error, Result};
pub use evidence::{SelectedEvidence, SelectionConfig, Strategy};
pub use par::Execution;
