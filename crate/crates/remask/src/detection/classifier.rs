//! Binary classifiers over margin feature vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::features::FeatureVector;

/// A binary classifier trained on labeled feature vectors. Implementations
/// must be deterministic for a fixed seed.
pub trait BinaryFeatureClassifier {
    fn fit(&mut self, data: &[FeatureVector], seed: u64) -> Result<()>;

    /// Probability that the example is adversarial.
    fn predict_prob(&self, features: &FeatureVector) -> Result<f64>;
}

/// Reference implementation: logistic regression fit by full-batch gradient
/// descent. Weights start at zero, so training is deterministic outright;
/// the seed is accepted for the trait contract and reserved for stochastic
/// implementations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticRegression {
    weights: Vec<f64>,
    bias: f64,
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticRegression {
    fn default() -> Self {
        Self {
            weights: Vec::new(),
            bias: 0.0,
            lr: 0.5,
            epochs: 400,
            l2: 1e-4,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl BinaryFeatureClassifier for LogisticRegression {
    fn fit(&mut self, data: &[FeatureVector], _seed: u64) -> Result<()> {
        let dims = data
            .first()
            .map(|fv| fv.values.len())
            .ok_or(Error::EmptyDataset)?;
        self.weights = vec![0.0; dims];
        self.bias = 0.0;
        let m = data.len() as f64;

        for _ in 0..self.epochs {
            let mut grad_w = vec![0.0; dims];
            let mut grad_b = 0.0;
            for fv in data {
                let y = if fv.label == Some(true) { 1.0 } else { 0.0 };
                let z: f64 = self
                    .weights
                    .iter()
                    .zip(&fv.values)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + self.bias;
                let err = sigmoid(z) - y;
                for (g, x) in grad_w.iter_mut().zip(&fv.values) {
                    *g += err * x;
                }
                grad_b += err;
            }
            for (w, g) in self.weights.iter_mut().zip(&grad_w) {
                *w -= self.lr * (g / m + self.l2 * *w);
            }
            self.bias -= self.lr * grad_b / m;
        }
        Ok(())
    }

    fn predict_prob(&self, features: &FeatureVector) -> Result<f64> {
        if features.values.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: features.values.len(),
            });
        }
        let z: f64 = self
            .weights
            .iter()
            .zip(&features.values)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z))
    }
}

/// Validates the dataset (uniform dimensions, labels present on every
/// example, both classes represented) and fits the classifier.
pub fn train_feature_classifier(
    data: &[FeatureVector],
    classifier: &mut dyn BinaryFeatureClassifier,
    seed: u64,
) -> Result<()> {
    let dims = data
        .first()
        .map(|fv| fv.values.len())
        .ok_or(Error::EmptyDataset)?;
    for fv in data {
        if fv.values.len() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                got: fv.values.len(),
            });
        }
        if fv.label.is_none() {
            return Err(Error::InvalidConfig(
                "every training feature vector needs a label".into(),
            ));
        }
    }
    let positives = data.iter().filter(|fv| fv.label == Some(true)).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::MissingLabel);
    }
    classifier.fit(data, seed)
}
