//! Seeded toy corpus generation for the two-class sentiment-flavored task.
//!
//! Every template decision below is load-bearing for some downstream
//! mechanism, and most of them exist to manage feature competition in the
//! bag-of-words victim (the most exposed class-correlated token wins the
//! training signal and starves the rest):
//!
//! - one *strong* sentiment word per sentence sits inside a class-keyed
//!   frame ("truly _ indeed" for class 1, "utterly _ alas" for class 2),
//!   so masking that slot reconstructs same-polarity words only;
//! - every sentence also carries the *other* class's frame filled with a
//!   neutral adjective ("utterly plain alas" inside class-1 text), which
//!   balances the frame words' class exposure exactly; frames and neutrals
//!   train to roughly zero evidence and stay out of the competition;
//! - two strong words per class keep each strong word's pure exposure above
//!   any mild word's net exposure, so strong words dominate;
//! - two same-class *mild* words plus one opposite mild live in frames
//!   shared by both classes ("quite _ overall", "plus _ too",
//!   "rather _ somehow"): masking a mild slot proposes both polarities,
//!   attacks get residual opposite evidence to flip onto, and the
//!   two-same-milds margin keeps normal sentences from flipping when a
//!   reconstruction swaps one mild for its opposite.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const STRONG_CLASS1: [&str; 2] = ["superb", "glorious"];
pub const STRONG_CLASS2: [&str; 2] = ["dismal", "wretched"];
pub const MILD_CLASS1: [&str; 3] = ["warm", "bright", "tidy"];
pub const MILD_CLASS2: [&str; 3] = ["cold", "dreary", "messy"];
pub const NEUTRAL: [&str; 3] = ["plain", "common", "usual"];

const OPENERS: [&str; 5] = [
    "the day was",
    "the trip felt",
    "a night so",
    "that show was",
    "our visit seemed",
];
const CLOSERS: [&str; 4] = [
    "for everyone there",
    "by any measure",
    "in the end",
    "after all that",
];

/// One corpus line; labels are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledText {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub size: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { size: 240, seed: 17 }
    }
}

impl CorpusSpec {
    pub fn new(size: usize, seed: u64) -> Self {
        Self { size, seed }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &'a [&'a str]) -> &'a str {
    options.choose(rng).expect("non-empty option list")
}

/// Generates `spec.size` labeled sentences, alternating classes. Every
/// sentence has the same 21-word shape:
/// opener(3) strong-frame(3) quite-mild(3) plus-mild(3) rather-opposite(3)
/// balancer-frame(3) closer(3).
///
/// Content words rotate deterministically through their pools so every
/// pool member gets exactly equal exposure; random sampling noise there
/// would skew per-word evidence and erode the margins the detection
/// mechanics rely on. Only the class-neutral opener/closer vary randomly.
pub fn generate_corpus(spec: &CorpusSpec) -> Vec<LabeledText> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.size);
    for i in 0..spec.size {
        let class = (i % 2) + 1;
        let (strong, mild_same, mild_opp) = match class {
            1 => (&STRONG_CLASS1[..], &MILD_CLASS1[..], &MILD_CLASS2[..]),
            _ => (&STRONG_CLASS2[..], &MILD_CLASS2[..], &MILD_CLASS1[..]),
        };
        let opener = pick(&mut rng, &OPENERS);
        let closer = pick(&mut rng, &CLOSERS);
        let turn = i / 2;
        let strong_word = strong[turn % strong.len()];
        let mild_a = mild_same[turn % mild_same.len()];
        let mild_b = mild_same[(turn + 1) % mild_same.len()];
        let opp = mild_opp[(turn + 2) % mild_opp.len()];
        let neutral = NEUTRAL[turn % NEUTRAL.len()];

        let (own_frame, balancer) = match class {
            1 => (
                format!("truly {strong_word} indeed"),
                format!("utterly {neutral} alas"),
            ),
            _ => (
                format!("utterly {strong_word} alas"),
                format!("truly {neutral} indeed"),
            ),
        };
        let text = format!(
            "{opener} {own_frame} quite {mild_a} overall plus {mild_b} too rather {opp} somehow {balancer} {closer}"
        );
        out.push(LabeledText { text, label: class });
    }
    out
}

/// Synonym pool for the word-level toy attack: sentiment words map to
/// in-vocabulary neutral adjectives, so a swap drains polarity without
/// leaving the vocabulary.
pub fn default_synonym_table() -> BTreeMap<String, Vec<String>> {
    let mut table = BTreeMap::new();
    let neutrals: Vec<String> = NEUTRAL.iter().map(|s| s.to_string()).collect();
    for w in STRONG_CLASS1
        .iter()
        .chain(STRONG_CLASS2.iter())
        .chain(MILD_CLASS1.iter())
        .chain(MILD_CLASS2.iter())
    {
        table.insert(w.to_string(), neutrals.clone());
    }
    table
}

/// Splits the corpus into labeled `(String, usize)` training rows.
pub fn as_training_rows(corpus: &[LabeledText]) -> Vec<(String, usize)> {
    corpus
        .iter()
        .map(|lt| (lt.text.clone(), lt.label))
        .collect()
}

/// Word lists for masked-LM fitting.
pub fn as_sentences(corpus: &[LabeledText]) -> Vec<Vec<String>> {
    corpus
        .iter()
        .map(|lt| lt.text.split_whitespace().map(str::to_string).collect())
        .collect()
}
