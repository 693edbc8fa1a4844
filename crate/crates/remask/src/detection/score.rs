//! The flip score: the fraction of reconstruction candidates whose victim
//! prediction disagrees with the prediction on the original input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict, predict_batch, Prediction, VictimModel};
use crate::reconstruction::ReconstructionSet;
use crate::text::TokenizedText;

/// Per-candidate outcome of running the victim over a reconstruction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    /// Index of the candidate's group within the plan (0-based).
    pub group_ordinal: usize,
    /// Original word position the candidate reconstructs.
    pub word_index: usize,
    /// Rank within its group (0-based, best first).
    pub rank: usize,
    /// Predicted 1-based label for the candidate text.
    pub label: usize,
    /// True when the candidate's prediction disagrees with the reference.
    pub flipped: bool,
    /// Confidence margin of the reference label on the candidate text:
    /// `p(reference) - max_other p`. Tends negative on flips.
    pub margin: f64,
}

/// The aggregate score. `value` is `flips / denominator` as a single IEEE
/// division of the two exact integer counts, so equality checks against an
/// independent count can compare the integers directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipScore {
    pub value: f64,
    /// Number of candidates whose prediction disagreed with the reference.
    pub flips: u32,
    /// Candidate slots considered: masked slots times `k`.
    pub terms: u32,
    pub n: usize,
    pub k: usize,
    /// `n * k`, or `terms` when renormalization is enabled.
    pub denominator: u32,
}

impl FlipScore {
    fn new(flips: u32, terms: u32, n: usize, k: usize, renormalize: bool) -> Self {
        let denominator = if renormalize {
            terms.max(1)
        } else {
            (n * k) as u32
        };
        FlipScore {
            value: flips as f64 / denominator as f64,
            flips,
            terms,
            n,
            k,
            denominator,
        }
    }
}

/// Classifies every candidate in one batched call and compares each hard
/// label against the reference prediction.
pub fn evaluate_candidates(
    reference: &Prediction,
    recon: &ReconstructionSet,
    victim: &dyn VictimModel,
) -> Result<Vec<CandidateOutcome>> {
    let texts: Vec<TokenizedText> = recon
        .iter_candidates()
        .map(|(_, c)| c.text.clone())
        .collect();
    let predictions = predict_batch(victim, &texts)?;

    let mut outcomes = Vec::with_capacity(predictions.len());
    let mut cursor = 0;
    for (ordinal, group) in recon.groups.iter().enumerate() {
        for candidate in &group.candidates {
            let pred = &predictions[cursor];
            cursor += 1;
            outcomes.push(CandidateOutcome {
                group_ordinal: ordinal,
                word_index: group.word_index,
                rank: candidate.rank,
                label: pred.label,
                flipped: pred.label != reference.label,
                margin: pred.confidence.margin_for(reference.label),
            });
        }
    }
    Ok(outcomes)
}

/// Aggregates outcomes into a [`FlipScore`]. The summation is commutative,
/// so candidate order never affects the result.
pub fn score_from_outcomes(
    outcomes: &[CandidateOutcome],
    n: usize,
    k: usize,
    renormalize: bool,
) -> FlipScore {
    let flips = outcomes.iter().filter(|o| o.flipped).count() as u32;
    let groups = outcomes
        .iter()
        .map(|o| o.group_ordinal)
        .max()
        .map_or(0, |m| m + 1) as u32;
    FlipScore::new(flips, groups * k as u32, n, k, renormalize)
}

/// Scores a reconstruction set against an already-computed reference
/// prediction. Returns the per-candidate outcomes alongside the score so
/// callers can reuse them for features or posterior analysis.
pub fn score_against(
    reference: &Prediction,
    recon: &ReconstructionSet,
    victim: &dyn VictimModel,
    renormalize: bool,
) -> Result<(FlipScore, Vec<CandidateOutcome>)> {
    let outcomes = evaluate_candidates(reference, recon, victim)?;
    let n = recon.plan.source.len();
    let score = score_from_outcomes(&outcomes, n, recon.k, renormalize);
    Ok((score, outcomes))
}

/// Scores `x` from scratch: one victim call for the reference prediction,
/// then one batched call over the candidates.
pub fn flip_score(
    x: &TokenizedText,
    recon: &ReconstructionSet,
    victim: &dyn VictimModel,
) -> Result<FlipScore> {
    if recon.plan.source != *x {
        return Err(Error::MismatchedReconstruction);
    }
    let reference = predict(victim, x)?;
    let (score, _) = score_against(&reference, recon, victim, false)?;
    Ok(score)
}
