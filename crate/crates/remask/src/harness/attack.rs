//! Greedy toy attacks for harness data generation.
//!
//! Both attacks visit words in descending gradient importance and keep a
//! perturbation only when it strictly lowers the victim's confidence in the
//! original label, stopping on a label flip or when the budget runs out.
//! Failures are recorded as results, not errors.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::masking::scaled_floor;
use crate::model::{predict, predict_batch, GradientCapableVictim, LabeledPair};
use crate::text::TokenizedText;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    SynonymSwap,
    CharPerturb,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackKind::SynonymSwap => write!(f, "synonym"),
            AttackKind::CharPerturb => write!(f, "char"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharOp {
    /// Swap two adjacent characters.
    Swap,
    /// Delete one character.
    Delete,
    /// Substitute one character with a random letter.
    Substitute,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Upper bound on the perturbed share of words, in (0, 1].
    pub max_perturb_fraction: f64,
    pub synonym_table: BTreeMap<String, Vec<String>>,
    pub char_ops: Vec<CharOp>,
    /// Maximum number of applied perturbations.
    pub budget: usize,
    pub seed: u64,
    /// Reserved step-rate knob for gradient-update attacks; the greedy toy
    /// attacks never read it and it is recorded for provenance only.
    pub epsilon: f64,
}

impl AttackConfig {
    pub fn synonym(table: BTreeMap<String, Vec<String>>, seed: u64) -> Self {
        Self {
            kind: AttackKind::SynonymSwap,
            max_perturb_fraction: 0.4,
            synonym_table: table,
            char_ops: vec![],
            budget: 5,
            seed,
            epsilon: 0.0,
        }
    }

    pub fn char_level(seed: u64) -> Self {
        Self {
            kind: AttackKind::CharPerturb,
            max_perturb_fraction: 0.4,
            synonym_table: BTreeMap::new(),
            char_ops: vec![CharOp::Swap, CharOp::Delete, CharOp::Substitute],
            budget: 5,
            seed,
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttackOutcome {
    Success { pair: LabeledPair },
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub outcome: AttackOutcome,
    pub perturbed_positions: BTreeSet<usize>,
    /// Victim texts classified while searching.
    pub queries: u64,
}

impl AttackResult {
    pub fn pair(&self) -> Option<&LabeledPair> {
        match &self.outcome {
            AttackOutcome::Success { pair } => Some(pair),
            AttackOutcome::Failure => None,
        }
    }

    fn failure(perturbed: BTreeSet<usize>, queries: u64) -> Self {
        Self {
            outcome: AttackOutcome::Failure,
            perturbed_positions: perturbed,
            queries,
        }
    }
}

/// Positions in descending importance, stable on ties.
fn descending_importance(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

fn perturbation_limit(n: usize, cfg: &AttackConfig) -> usize {
    cfg.budget.min(scaled_floor(cfg.max_perturb_fraction, n))
}

/// Word-level attack: greedy synonym substitution by importance order.
pub fn synonym_attack(
    victim: &dyn GradientCapableVictim,
    x: &TokenizedText,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let reference = predict(victim, x)?;
    let target = reference.label;
    let mut queries = 1u64;
    let (_, importance) = victim.loss_and_gradient_norms(x, target)?;

    let limit = perturbation_limit(x.len(), cfg);
    let mut current = x.clone();
    let mut current_conf = reference.confidence.prob_of(target);
    let mut perturbed = BTreeSet::new();

    for pos in descending_importance(&importance) {
        if perturbed.len() >= limit {
            break;
        }
        let Some(synonyms) = cfg.synonym_table.get(current.word(pos)) else {
            continue;
        };
        if synonyms.is_empty() {
            continue;
        }
        let candidates: Vec<TokenizedText> = synonyms
            .iter()
            .map(|s| current.with_word_replaced(pos, s))
            .collect();
        let predictions = predict_batch(victim, &candidates)?;
        queries += candidates.len() as u64;

        let best = predictions
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.confidence
                    .prob_of(target)
                    .total_cmp(&b.confidence.prob_of(target))
            })
            .expect("non-empty candidate list");
        let (best_idx, best_pred) = best;
        let best_conf = best_pred.confidence.prob_of(target);
        if best_conf < current_conf {
            current = candidates[best_idx].clone();
            current_conf = best_conf;
            perturbed.insert(pos);
            if best_pred.label != target {
                return Ok(AttackResult {
                    outcome: AttackOutcome::Success {
                        pair: LabeledPair {
                            normal: x.clone(),
                            adversarial: current,
                            origin: cfg.kind.to_string(),
                        },
                    },
                    perturbed_positions: perturbed,
                    queries,
                });
            }
        }
    }
    Ok(AttackResult::failure(perturbed, queries))
}

/// Applies one character operation; the result always differs from the
/// input by exactly one edit and is never empty.
fn apply_char_op(word: &str, ops: &[CharOp], rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    // One-char words only admit substitution; deletes would empty them.
    let op = if chars.len() < 2 {
        CharOp::Substitute
    } else {
        ops[rng.random_range(0..ops.len())]
    };
    match op {
        CharOp::Swap if chars.len() >= 2 => {
            let mut i = rng.random_range(0..chars.len() - 1);
            // A swap of identical characters would be a no-op; walk to the
            // first differing pair, falling back to substitution.
            let start = i;
            loop {
                if chars[i] != chars[i + 1] {
                    let mut out = chars.clone();
                    out.swap(i, i + 1);
                    return out.into_iter().collect();
                }
                i = (i + 1) % (chars.len() - 1);
                if i == start {
                    break;
                }
            }
            substitute(&chars, rng)
        }
        CharOp::Delete if chars.len() >= 2 => {
            let i = rng.random_range(0..chars.len());
            let mut out = chars.clone();
            out.remove(i);
            out.into_iter().collect()
        }
        _ => substitute(&chars, rng),
    }
}

fn substitute(chars: &[char], rng: &mut ChaCha8Rng) -> String {
    let i = rng.random_range(0..chars.len());
    let offset = rng.random_range(1..26u8);
    let replacement = if chars[i].is_ascii_lowercase() {
        let base = chars[i] as u8 - b'a';
        (b'a' + (base + offset) % 26) as char
    } else {
        (b'a' + offset) as char
    };
    let mut out = chars.to_vec();
    out[i] = replacement;
    out.into_iter().collect()
}

/// Character-level attack: one seeded character edit per visited word,
/// driving perturbed words out of the vocabulary.
pub fn char_attack(
    victim: &dyn GradientCapableVictim,
    x: &TokenizedText,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    if cfg.char_ops.is_empty() {
        return Ok(AttackResult::failure(BTreeSet::new(), 0));
    }
    let reference = predict(victim, x)?;
    let target = reference.label;
    let mut queries = 1u64;
    let (_, importance) = victim.loss_and_gradient_norms(x, target)?;

    let limit = perturbation_limit(x.len(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = x.clone();
    let mut current_conf = reference.confidence.prob_of(target);
    let mut perturbed = BTreeSet::new();

    for pos in descending_importance(&importance) {
        if perturbed.len() >= limit {
            break;
        }
        let mutated = apply_char_op(current.word(pos), &cfg.char_ops, &mut rng);
        let candidate = current.with_word_replaced(pos, &mutated);
        let prediction = predict(victim, &candidate)?;
        queries += 1;

        let conf = prediction.confidence.prob_of(target);
        if prediction.label != target {
            perturbed.insert(pos);
            return Ok(AttackResult {
                outcome: AttackOutcome::Success {
                    pair: LabeledPair {
                        normal: x.clone(),
                        adversarial: candidate,
                        origin: cfg.kind.to_string(),
                    },
                },
                perturbed_positions: perturbed,
                queries,
            });
        }
        if conf < current_conf {
            current = candidate;
            current_conf = conf;
            perturbed.insert(pos);
        }
        // Otherwise the edit is reverted: `current` is left untouched.
    }
    Ok(AttackResult::failure(perturbed, queries))
}

/// Runs the configured attack.
pub fn run_attack(
    victim: &dyn GradientCapableVictim,
    x: &TokenizedText,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    match cfg.kind {
        AttackKind::SynonymSwap => synonym_attack(victim, x, cfg),
        AttackKind::CharPerturb => char_attack(victim, x, cfg),
    }
}

/// Attacks corpus sentences with synonym and character attacks alternately
/// until `target_pairs` successes accumulate (or the corpus runs out).
/// Per-example seeds derive from the base seed and the sentence index.
pub fn build_pairs(
    victim: &dyn GradientCapableVictim,
    corpus: &[super::corpus::LabeledText],
    synonym_cfg: &AttackConfig,
    char_cfg: &AttackConfig,
    target_pairs: usize,
) -> Result<Vec<LabeledPair>> {
    let mut pairs = Vec::with_capacity(target_pairs);
    for (i, lt) in corpus.iter().enumerate() {
        if pairs.len() >= target_pairs {
            break;
        }
        let text = crate::text::tokenize(&lt.text)?;
        let cfg = if i % 2 == 0 { synonym_cfg } else { char_cfg };
        let cfg = AttackConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..cfg.clone()
        };
        let result = run_attack(victim, &text, &cfg)?;
        if let Some(pair) = result.pair() {
            pairs.push(pair.clone());
        }
    }
    Ok(pairs)
}
