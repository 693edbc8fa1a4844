//! Margin feature vectors for the model-based classifier.
//!
//! Slot `(i, j)` of the vector (group `i`, rank `j`) holds the confidence
//! margin of the original prediction on that candidate, laid out at index
//! `i * k + j`. Vectors are padded with ones (the "confidently unchanged"
//! value) or truncated to the configured fixed length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict, VictimModel};
use crate::reconstruction::ReconstructionSet;
use crate::text::TokenizedText;

use super::score::{evaluate_candidates, CandidateOutcome};
use super::DetectorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub sorted: bool,
    /// True for adversarial examples; set when building training data.
    pub label: Option<bool>,
}

impl FeatureVector {
    pub fn with_label(mut self, adversarial: bool) -> Self {
        self.label = Some(adversarial);
        self
    }
}

/// Lays candidate margins out at `group * k + rank`, padding with ones and
/// truncating to `feature_dims`.
pub fn feature_vector_from_outcomes(
    outcomes: &[CandidateOutcome],
    k: usize,
    feature_dims: usize,
) -> FeatureVector {
    let mut values = vec![1.0; feature_dims];
    for outcome in outcomes {
        let slot = outcome.group_ordinal * k + outcome.rank;
        if slot < feature_dims {
            values[slot] = outcome.margin;
        }
    }
    FeatureVector {
        values,
        sorted: false,
        label: None,
    }
}

/// Runs the victim over the reconstruction set and produces the margin
/// features for `x`.
pub fn feature_vector(
    x: &TokenizedText,
    recon: &ReconstructionSet,
    victim: &dyn VictimModel,
    config: &DetectorConfig,
) -> Result<FeatureVector> {
    if recon.plan.source != *x {
        return Err(Error::MismatchedReconstruction);
    }
    let reference = predict(victim, x)?;
    let outcomes = evaluate_candidates(&reference, recon, victim)?;
    Ok(feature_vector_from_outcomes(
        &outcomes,
        recon.k,
        config.feature_dims,
    ))
}

/// Ascending sort of the feature values; idempotent.
pub fn sort_features(fv: &FeatureVector) -> FeatureVector {
    let mut values = fv.values.clone();
    values.sort_by(f64::total_cmp);
    FeatureVector {
        values,
        sorted: true,
        label: fv.label,
    }
}
