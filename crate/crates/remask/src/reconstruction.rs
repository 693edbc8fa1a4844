//! Unmasking: querying a masked-language-model backend for top-k
//! replacements at each masked slot and materializing the rebuilt texts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskingPlan;
use crate::text::TokenizedText;

/// One ranked replacement proposed by a masked-LM backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillCandidate {
    pub word: String,
    pub score: f64,
}

/// A masked-language-model backend.
///
/// `fill` receives the rendered word list (with the mask token in place),
/// the 0-based masked index, and the beam width `k`. It must return between
/// 1 and `k` whole-word candidates with non-increasing scores, and must be
/// deterministic for identical inputs. Backends that operate on subwords
/// resolve to whole words before returning.
pub trait MaskedLm: Sync {
    fn fill(&self, rendered: &[String], mask_index: usize, k: usize) -> Result<Vec<FillCandidate>>;
}

/// A rebuilt text: the source with one masked slot filled by a candidate.
/// The candidate may equal the original word; equal candidates are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionCandidate {
    /// 0-based rank within its slot's candidate list (best first).
    pub rank: usize,
    pub word: String,
    pub text: TokenizedText,
    pub mlm_score: f64,
}

/// All candidates for one masked slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionGroup {
    /// Original word position this group reconstructs.
    pub word_index: usize,
    /// Between 1 and `k` candidates, rank order.
    pub candidates: Vec<ReconstructionCandidate>,
}

/// The full reconstruction ensemble for a masking plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionSet {
    /// Groups aligned with `plan.variants` (ascending original position).
    pub groups: Vec<ReconstructionGroup>,
    pub k: usize,
    pub plan: MaskingPlan,
    /// Variant ordinals whose backend returned fewer than `k` candidates.
    /// Scores keep the configured `k` in the denominator; the missing terms
    /// contribute zero, and reports surface this flag.
    pub short_groups: Vec<usize>,
}

impl ReconstructionSet {
    pub fn candidate_count(&self) -> usize {
        self.groups.iter().map(|g| g.candidates.len()).sum()
    }

    pub fn iter_candidates(&self) -> impl Iterator<Item = (&ReconstructionGroup, &ReconstructionCandidate)> {
        self.groups
            .iter()
            .flat_map(|g| g.candidates.iter().map(move |c| (g, c)))
    }
}

/// Queries the backend for one masked variant and substitutes each candidate
/// into the source. Candidates equal to the original word are retained.
pub fn fill_mask(
    mlm: &dyn MaskedLm,
    source: &TokenizedText,
    variant: &crate::masking::MaskedVariant,
    k: usize,
) -> Result<ReconstructionGroup> {
    debug_assert!(k >= 1, "beam width must be at least 1");
    let raw = mlm.fill(&variant.rendered, variant.word_index, k)?;
    if raw.is_empty() {
        return Err(Error::ShortBeam {
            position: variant.word_index,
        });
    }
    let candidates = raw
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, fc)| ReconstructionCandidate {
            rank,
            text: source.with_word_replaced(variant.word_index, &fc.word),
            word: fc.word,
            mlm_score: fc.score,
        })
        .collect();
    Ok(ReconstructionGroup {
        word_index: variant.word_index,
        candidates,
    })
}

/// Reconstructs every variant of the plan: exactly one backend call per
/// variant, `k` candidates requested per call.
pub fn reconstruct_all(
    mlm: &dyn MaskedLm,
    plan: &MaskingPlan,
    k: usize,
) -> Result<ReconstructionSet> {
    let mut groups = Vec::with_capacity(plan.variants.len());
    let mut short_groups = Vec::new();
    for (ordinal, variant) in plan.variants.iter().enumerate() {
        let group = fill_mask(mlm, &plan.source, variant, k)?;
        if group.candidates.len() < k {
            short_groups.push(ordinal);
        }
        groups.push(group);
    }
    Ok(ReconstructionSet {
        groups,
        k,
        plan: plan.clone(),
        short_groups,
    })
}
