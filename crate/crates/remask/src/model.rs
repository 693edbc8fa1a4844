//! Victim-classifier abstractions: confidence vectors, predictions, and the
//! traits every concrete backend implements.
//!
//! Class labels are 1-based everywhere a label crosses a public or wire
//! boundary; `label` fields in this module follow that convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::TokenizedText;

/// Tolerance for the probability-simplex check on locally produced vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A probability distribution over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector {
    probs: Vec<f64>,
}

impl ConfidenceVector {
    /// Validates the simplex invariants: at least two classes, entries in
    /// `[0, 1]`, sum within [`SIMPLEX_TOLERANCE`] of one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "confidence vector needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig(
                "confidence entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "confidence entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }

    /// 1-based argmax with ties broken toward the lowest class index.
    pub fn argmax_label(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best + 1
    }

    /// Probability of a 1-based label.
    pub fn prob_of(&self, label: usize) -> f64 {
        self.probs[label - 1]
    }

    /// Margin of `label` over the best competing class:
    /// `p(label) - max_{y != label} p(y)`. Negative when another class wins.
    pub fn margin_for(&self, label: usize) -> f64 {
        let own = self.probs[label - 1];
        let best_other = self
            .probs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label - 1)
            .map(|(_, &p)| p)
            .fold(f64::NEG_INFINITY, f64::max);
        own - best_other
    }
}

/// A hard prediction together with the confidence it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// 1-based class label, `label == argmax(confidence)` with the
    /// lowest-index tie rule.
    pub label: usize,
    pub confidence: ConfidenceVector,
}

impl Prediction {
    pub fn from_confidence(confidence: ConfidenceVector) -> Self {
        let label = confidence.argmax_label();
        Self { label, confidence }
    }
}

/// A text classifier under attack.
///
/// Implementations must be deterministic for identical inputs, and batch
/// results must line up with the input order. They must either be safe for
/// concurrent calls or serialize internally; the `Sync` bound lets the
/// pipeline share references across threads.
pub trait VictimModel: Sync {
    fn classify_batch(&self, texts: &[TokenizedText]) -> Result<Vec<ConfidenceVector>>;

    /// Number of classes the model distinguishes.
    fn class_count(&self) -> usize;
}

/// A victim that can also report loss gradients at its word embeddings.
pub trait GradientCapableVictim: VictimModel {
    /// Runs one forward and one backward pass for cross-entropy against
    /// `target_label` (1-based), returning the loss and the L2 norm of the
    /// gradient at each word's embedding slot. The returned list has one
    /// entry per word of `text`.
    fn loss_and_gradient_norms(
        &self,
        text: &TokenizedText,
        target_label: usize,
    ) -> Result<(f64, Vec<f64>)>;
}

/// Classifies a single text and materializes the hard label.
pub fn predict(victim: &dyn VictimModel, text: &TokenizedText) -> Result<Prediction> {
    let mut batch = victim.classify_batch(std::slice::from_ref(text))?;
    let confidence = batch.pop().ok_or_else(|| {
        Error::Backend(crate::error::BackendError::Other(
            "victim returned an empty batch".into(),
        ))
    })?;
    Ok(Prediction::from_confidence(confidence))
}

/// Batched variant of [`predict`]; output order matches input order.
pub fn predict_batch(
    victim: &dyn VictimModel,
    texts: &[TokenizedText],
) -> Result<Vec<Prediction>> {
    let batch = victim.classify_batch(texts)?;
    if batch.len() != texts.len() {
        return Err(Error::Backend(crate::error::BackendError::Other(format!(
            "victim returned {} results for {} inputs",
            batch.len(),
            texts.len()
        ))));
    }
    Ok(batch.into_iter().map(Prediction::from_confidence).collect())
}

/// A normal text and its successful adversarial counterpart.
///
/// At creation time the attack guaranteed `z(normal) != z(adversarial)`
/// under the victim that produced the pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub normal: TokenizedText,
    pub adversarial: TokenizedText,
    /// Attack identifier, e.g. "synonym" or "char".
    pub origin: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedVictim(Vec<f64>);

    impl VictimModel for FixedVictim {
        fn classify_batch(&self, texts: &[TokenizedText]) -> Result<Vec<ConfidenceVector>> {
            Ok(texts
                .iter()
                .map(|_| ConfidenceVector::new(self.0.clone()).unwrap())
                .collect())
        }
        fn class_count(&self) -> usize {
            self.0.len()
        }
    }

    #[test]
    fn argmax_picks_largest() {
        let cv = ConfidenceVector::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(cv.argmax_label(), 1);
        let cv = ConfidenceVector::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(cv.argmax_label(), 2);
    }

    #[test]
    fn argmax_tie_breaks_low() {
        let cv = ConfidenceVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(cv.argmax_label(), 1);
        let cv = ConfidenceVector::new(vec![0.25, 0.375, 0.375]).unwrap();
        assert_eq!(cv.argmax_label(), 2);
    }

    #[test]
    fn simplex_invariants_enforced() {
        assert!(ConfidenceVector::new(vec![1.0]).is_err());
        assert!(ConfidenceVector::new(vec![0.7, 0.4]).is_err());
        assert!(ConfidenceVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ConfidenceVector::new(vec![0.3, 0.7]).is_ok());
    }

    #[test]
    fn margins() {
        let cv = ConfidenceVector::new(vec![0.7, 0.3]).unwrap();
        assert!((cv.margin_for(1) - 0.4).abs() < 1e-12);
        let cv = ConfidenceVector::new(vec![0.2, 0.8]).unwrap();
        assert!((cv.margin_for(1) - (-0.6)).abs() < 1e-12);
    }

    #[test]
    fn predict_is_repeatable() {
        let victim = FixedVictim(vec![0.25, 0.25, 0.5]);
        let text = crate::text::tokenize("the cat sat").unwrap();
        let a = predict(&victim, &text).unwrap();
        let b = predict(&victim, &text).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.label, 3);
    }
}
