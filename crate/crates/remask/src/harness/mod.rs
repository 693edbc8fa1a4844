//! Desk-scale experiment harness: toy corpora, greedy attacks, dataset IO,
//! and detector evaluation.

pub mod attack;
pub mod corpus;
pub mod dataset;
pub mod eval;

pub use attack::{
    build_pairs, char_attack, run_attack, synonym_attack, AttackConfig, AttackKind,
    AttackOutcome, AttackResult, CharOp,
};
pub use corpus::{default_synonym_table, generate_corpus, CorpusSpec, LabeledText};
pub use eval::{auc, evaluate, evaluate_examples, verify_pairs, EvalReport, ExampleOutcome};
