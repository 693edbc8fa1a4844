//! The end-to-end detection pipeline: importance (when gradient-guided),
//! mask, reconstruct, score, threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{mask_one_by_one, mask_selected, select_keywords, MaskStrategy};
use crate::model::{predict, GradientCapableVictim, Prediction, VictimModel};
use crate::reconstruction::{reconstruct_all, MaskedLm};
use crate::text::TokenizedText;

use super::score::{evaluate_candidates, score_from_outcomes, CandidateOutcome, FlipScore};
use super::DetectorConfig;

/// Backend traffic incurred by one pipeline run, in texts and calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLog {
    /// Victim texts classified to obtain the reference prediction.
    pub victim_reference_texts: u64,
    /// Victim texts classified for reconstruction candidates.
    pub victim_candidate_texts: u64,
    /// Mask-fill calls issued (one per masked slot).
    pub mlm_fills: u64,
    /// Backward passes for importance scores.
    pub gradient_passes: u64,
}

impl CallLog {
    pub fn add(&mut self, other: &CallLog) {
        self.victim_reference_texts += other.victim_reference_texts;
        self.victim_candidate_texts += other.victim_candidate_texts;
        self.mlm_fills += other.mlm_fills;
        self.gradient_passes += other.gradient_passes;
    }
}

/// Result of scoring one input, before any threshold is applied.
#[derive(Debug, Clone)]
pub struct ScoreOutcome {
    pub score: FlipScore,
    pub reference: Prediction,
    pub outcomes: Vec<CandidateOutcome>,
    pub strategy_used: MaskStrategy,
    /// Set when gradient-guided masking fell back to one-by-one because the
    /// victim exposes no gradients or importance was uniformly zero.
    pub gradient_fallback: bool,
    pub calls: CallLog,
}

/// A thresholded decision with its full provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    /// True means adversarial (`score > tau`), false means normal.
    pub adversarial: bool,
    pub score: FlipScore,
    pub tau: f64,
    pub config: DetectorConfig,
    pub strategy_used: MaskStrategy,
    pub gradient_fallback: bool,
    pub calls: CallLog,
}

pub struct Detector<'a> {
    config: DetectorConfig,
    victim: &'a dyn VictimModel,
    gradients: Option<&'a dyn GradientCapableVictim>,
    mlm: &'a dyn MaskedLm,
}

impl<'a> Detector<'a> {
    pub fn new(
        config: DetectorConfig,
        victim: &'a dyn VictimModel,
        mlm: &'a dyn MaskedLm,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            victim,
            gradients: None,
            mlm,
        })
    }

    pub fn with_gradients(mut self, gradients: &'a dyn GradientCapableVictim) -> Self {
        self.gradients = Some(gradients);
        self
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Runs the pipeline up to the raw score.
    pub fn score(&self, x: &TokenizedText) -> Result<ScoreOutcome> {
        let mut calls = CallLog {
            victim_reference_texts: 1,
            ..CallLog::default()
        };
        let reference = predict(self.victim, x)?;

        let mut strategy_used = self.config.strategy;
        let mut gradient_fallback = false;

        let plan = match self.config.strategy {
            MaskStrategy::OneByOne | MaskStrategy::OracleFiltered => {
                mask_one_by_one(x, &self.config.mask_token)
            }
            MaskStrategy::GradientGuided => {
                let importance = match self.gradients {
                    Some(grad) => {
                        calls.gradient_passes += 1;
                        let (_, norms) = grad.loss_and_gradient_norms(x, reference.label)?;
                        if norms.len() != x.len() {
                            return Err(Error::LengthMismatch {
                                expected: x.len(),
                                got: norms.len(),
                            });
                        }
                        Some(norms)
                    }
                    None => {
                        log::warn!(
                            "victim exposes no gradients; falling back to one-by-one masking"
                        );
                        None
                    }
                };
                match importance {
                    Some(norms) if norms.iter().any(|&s| s != 0.0) => {
                        let selection = select_keywords(x, &norms, self.config.rate)?;
                        mask_selected(x, &selection, self.config.rate, &self.config.mask_token)?
                    }
                    Some(_) => {
                        log::warn!(
                            "importance scores are uniformly zero; falling back to one-by-one masking"
                        );
                        strategy_used = MaskStrategy::OneByOne;
                        gradient_fallback = true;
                        mask_one_by_one(x, &self.config.mask_token)
                    }
                    None => {
                        strategy_used = MaskStrategy::OneByOne;
                        gradient_fallback = true;
                        mask_one_by_one(x, &self.config.mask_token)
                    }
                }
            }
        };

        let recon = reconstruct_all(self.mlm, &plan, self.config.k)?;
        calls.mlm_fills = plan.variants.len() as u64;
        let outcomes = evaluate_candidates(&reference, &recon, self.victim)?;
        calls.victim_candidate_texts = recon.candidate_count() as u64;

        let score = match self.config.strategy {
            MaskStrategy::OracleFiltered => oracle_filtered_score(
                &outcomes,
                x.len(),
                self.config.k,
                self.config.gamma,
                self.config.renormalize,
            ),
            _ => score_from_outcomes(&outcomes, x.len(), self.config.k, self.config.renormalize),
        };

        Ok(ScoreOutcome {
            score,
            reference,
            outcomes,
            strategy_used,
            gradient_fallback,
            calls,
        })
    }

    /// Full detection: requires a calibrated threshold.
    pub fn detect(&self, x: &TokenizedText) -> Result<Verdict> {
        let tau = self.config.tau.ok_or(Error::UncalibratedDetector)?;
        let outcome = self.score(x)?;
        Ok(Verdict {
            adversarial: outcome.score.value > tau,
            score: outcome.score,
            tau,
            config: self.config.clone(),
            strategy_used: outcome.strategy_used,
            gradient_fallback: outcome.gradient_fallback,
            calls: outcome.calls,
        })
    }
}

/// Restricted score for the oracle-filtered strategy: positions whose
/// posterior flip count stays at or below gamma are treated as non-keywords
/// and excluded from the sum.
fn oracle_filtered_score(
    outcomes: &[CandidateOutcome],
    n: usize,
    k: usize,
    gamma: usize,
    renormalize: bool,
) -> FlipScore {
    let mut per_position = vec![0u32; n];
    for o in outcomes {
        if o.flipped {
            per_position[o.word_index] += 1;
        }
    }
    let kept: Vec<usize> = (0..n)
        .filter(|&i| per_position[i] > gamma as u32)
        .collect();
    let flips: u32 = kept.iter().map(|&i| per_position[i]).sum();
    let terms = (kept.len() * k) as u32;
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
