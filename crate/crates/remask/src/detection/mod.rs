//! Scoring and classification: flip scores, threshold calibration, margin
//! feature vectors, and the end-to-end detection pipeline.

mod classifier;
mod features;
mod pipeline;
mod score;
mod threshold;

pub use classifier::{train_feature_classifier, BinaryFeatureClassifier, LogisticRegression};
pub use features::{feature_vector, feature_vector_from_outcomes, sort_features, FeatureVector};
pub use pipeline::{CallLog, Detector, ScoreOutcome, Verdict};
pub use score::{
    evaluate_candidates, flip_score, score_against, score_from_outcomes, CandidateOutcome,
    FlipScore,
};
pub use threshold::{
    calibrate_threshold, f1_counts, f1_from_counts, histogram, Calibration,
    CalibrationArtifact, HistogramBin,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskStrategy;

/// Everything the detector needs to run, plus the calibrated threshold once
/// one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Masking rate in (0, 1]. One-by-one masking fixes this at 1.
    pub rate: f64,
    /// Reconstruction candidates kept per masked slot.
    pub k: usize,
    pub strategy: MaskStrategy,
    /// Decision threshold; absent until calibrated.
    pub tau: Option<f64>,
    /// Posterior flip-count bound for oracle filtering and analysis.
    pub gamma: usize,
    pub mask_token: String,
    /// Fixed feature-vector length; shorter vectors pad with ones.
    pub feature_dims: usize,
    /// When set, flip scores divide by the number of masked slots times `k`
    /// instead of `n * k`. Off by default: the standard denominator stays
    /// `n * k` for every strategy and the threshold is calibrated per
    /// configuration to absorb the compression.
    pub renormalize: bool,
}

impl DetectorConfig {
    /// One-by-one masking over every word.
    pub fn one_by_one() -> Self {
        Self {
            rate: 1.0,
            k: 3,
            strategy: MaskStrategy::OneByOne,
            tau: None,
            gamma: 1,
            mask_token: crate::masking::DEFAULT_MASK_TOKEN.to_string(),
            feature_dims: 384,
            renormalize: false,
        }
    }

    /// Gradient-guided masking at the default 0.3 rate.
    pub fn gradient_guided() -> Self {
        Self {
            rate: 0.3,
            strategy: MaskStrategy::GradientGuided,
            ..Self::one_by_one()
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rate must lie in (0, 1], got {}",
                self.rate
            )));
        }
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if let Some(tau) = self.tau {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::InvalidConfig(format!(
                    "tau must lie in [0, 1], got {tau}"
                )));
            }
        }
        if self.gamma > self.k {
            return Err(Error::InvalidConfig(format!(
                "gamma {} exceeds k {}",
                self.gamma, self.k
            )));
        }
        if self.feature_dims == 0 {
            return Err(Error::InvalidConfig("feature_dims must be positive".into()));
        }
        if self.mask_token.is_empty() || self.mask_token.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(
                "mask token must be a single non-empty word".into(),
            ));
        }
        Ok(())
    }
}
