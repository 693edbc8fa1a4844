//! Word importance and posterior keyword analysis.
//!
//! Importance is the L2 norm of the loss gradient at each word's embedding,
//! computed in a single backward pass against the victim's own prediction.
//! The posterior ("oracle") analysis looks at the full one-by-one flip
//! counts instead: a position whose reconstructions flipped the prediction
//! at most `gamma` times is a non-keyword, since dropping it leaves the
//! flip score essentially untouched.

mod analysis;

pub use analysis::{
    analyze, nonkeyword_proportion, overlap_rate, write_distribution_csv, AnalysisReport,
    ExampleAnalysis, GammaRow, OverlapStats, ProportionStats,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::detection::CandidateOutcome;
use crate::error::{Error, Result};
use crate::model::{predict, GradientCapableVictim, VictimModel};
use crate::reconstruction::ReconstructionSet;
use crate::text::TokenizedText;

/// Per-word importance scores for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    /// One non-negative score per word.
    pub scores: Vec<f64>,
    /// The 1-based label the loss was taken against (the victim's own
    /// prediction, not any ground truth).
    pub target_label: usize,
}

/// Computes importance scores with exactly one backward pass.
pub fn importance_scores(
    victim: &dyn GradientCapableVictim,
    x: &TokenizedText,
) -> Result<ImportanceProfile> {
    let reference = predict(victim, x)?;
    let (_, scores) = victim.loss_and_gradient_norms(x, reference.label)?;
    if scores.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|&s| s < 0.0 || !s.is_finite()) {
        return Err(Error::Backend(crate::error::BackendError::Other(
            "gradient norms must be finite and non-negative".into(),
        )));
    }
    Ok(ImportanceProfile {
        scores,
        target_label: reference.label,
    })
}

/// Positions split by posterior flip counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSets {
    /// Positions whose flip count is at most `gamma`.
    pub non_keywords: BTreeSet<usize>,
    pub gamma: usize,
    /// Flip count per word position, each in `0..=k`.
    pub flip_counts: Vec<u32>,
}

/// Builds the posterior sets from already-evaluated candidate outcomes.
pub fn oracle_sets_from_outcomes(
    outcomes: &[CandidateOutcome],
    n: usize,
    gamma: usize,
) -> OracleSets {
    let mut flip_counts = vec![0u32; n];
    for o in outcomes {
        if o.flipped {
            flip_counts[o.word_index] += 1;
        }
    }
    let non_keywords = (0..n)
        .filter(|&i| flip_counts[i] <= gamma as u32)
        .collect();
    OracleSets {
        non_keywords,
        gamma,
        flip_counts,
    }
}

/// Runs the victim over a full one-by-one reconstruction and selects the
/// positions whose flip count stays at or below `gamma`.
pub fn oracle_nonkeywords(
    x: &TokenizedText,
    recon: &ReconstructionSet,
    victim: &dyn VictimModel,
    gamma: usize,
) -> Result<OracleSets> {
    if recon.plan.source != *x {
        return Err(Error::MismatchedReconstruction);
    }
    if !recon.plan.covers_all_positions() {
        return Err(Error::RequiresFullPlan);
    }
    let reference = predict(victim, x)?;
    let outcomes = crate::detection::evaluate_candidates(&reference, recon, victim)?;
    Ok(oracle_sets_from_outcomes(&outcomes, x.len(), gamma))
}
