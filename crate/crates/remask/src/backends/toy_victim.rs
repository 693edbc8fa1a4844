//! A deterministic desk-scale victim classifier with closed-form gradients.
//!
//! The model embeds each word, applies a pointwise cubic feature map
//! `phi(e) = e + a * e^3`, mean-pools over the sentence, and classifies with
//! a linear head: `probs = softmax(W * mean_t(phi(e_t)) + b)`.
//!
//! The cubic term matters: under plain mean pooling the loss gradient at
//! every word slot is identical (each slot reaches the loss only through the
//! mean), so per-word importance ranking would be constant. With the cubic
//! map the slot gradient is `(1/n) * (1 + 3a*e_t^2) . g`, which scales with
//! the word's own embedding along loss-relevant directions while remaining
//! exact and cheap to check against finite differences.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConfidenceVector, GradientCapableVictim, VictimModel};
use crate::text::TokenizedText;

/// Row reserved for out-of-vocabulary words.
pub const UNK_ROW: usize = 0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyVictimModel {
    vocab: BTreeMap<String, usize>,
    /// `(|V| + 1) x d`; row 0 is the UNK row.
    embeddings: Array2<f64>,
    /// `c x d` linear head.
    head_weights: Array2<f64>,
    head_bias: Array1<f64>,
    dim: usize,
    classes: usize,
    cubic_coeff: f64,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyVictimTrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub cubic_coeff: f64,
    pub init_scale: f64,
    /// L2 penalty keeping embeddings and head weights from saturating the
    /// softmax; saturated probabilities would hide the confidence drops the
    /// greedy attacks steer by.
    pub weight_decay: f64,
    /// Max-norm cap on embedding rows. The highest-exposure words of both
    /// classes ride the cap, which equalizes their scales; without it the
    /// cubic feature map amplifies initialization noise into class
    /// asymmetry.
    pub max_norm: f64,
}

impl Default for ToyVictimTrainConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 600,
            lr: 0.5,
            seed: 42,
            cubic_coeff: 0.5,
            init_scale: 0.2,
            weight_decay: 9e-3,
            max_norm: 2.5,
        }
    }
}

struct Forward {
    rows: Vec<usize>,
    pooled: Array1<f64>,
    probs: Array1<f64>,
}

impl ToyVictimModel {
    /// Fits embeddings and head by full-batch gradient descent on
    /// cross-entropy. Full-batch keeps training order-independent, so no
    /// class picks up a bias from example ordering. Bit-identical for
    /// identical `(corpus, config)`.
    pub fn train(corpus: &[(String, usize)], cfg: &ToyVictimTrainConfig) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let labels: BTreeSet<usize> = corpus.iter().map(|(_, l)| *l).collect();
        if labels.len() < 2 {
            return Err(Error::SingleClassCorpus);
        }
        if labels.iter().any(|&l| l == 0) {
            return Err(Error::InvalidConfig("class labels are 1-based".into()));
        }
        let classes = *labels.iter().max().expect("non-empty");

        let mut words = BTreeSet::new();
        let mut tokenized = Vec::with_capacity(corpus.len());
        for (raw, label) in corpus {
            let text = crate::text::tokenize(raw)?;
            words.extend(text.words().iter().cloned());
            tokenized.push((text, *label));
        }
        let vocab: BTreeMap<String, usize> = words
            .into_iter()
            .enumerate()
            .map(|(i, w)| (w, i + 1))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let rows = vocab.len() + 1;
        let mut embeddings = Array2::zeros((rows, cfg.dim));
        for r in 1..rows {
            for c in 0..cfg.dim {
                embeddings[(r, c)] = rng.random_range(-cfg.init_scale..cfg.init_scale);
            }
        }
        let mut head_weights = Array2::zeros((classes, cfg.dim));
        for r in 0..classes {
            for c in 0..cfg.dim {
                head_weights[(r, c)] = rng.random_range(-cfg.init_scale..cfg.init_scale);
            }
        }
        let head_bias = Array1::zeros(classes);

        let mut model = Self {
            vocab,
            embeddings,
            head_weights,
            head_bias,
            dim: cfg.dim,
            classes,
            cubic_coeff: cfg.cubic_coeff,
            seed: cfg.seed,
        };

        for _ in 0..cfg.epochs {
            model.batch_step(&tokenized, cfg.lr, cfg.weight_decay);
            model.clamp_embedding_norms(cfg.max_norm);
        }
        Ok(model)
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.vocab.contains_key(word)
    }

    fn row_of(&self, word: &str) -> usize {
        self.vocab.get(word).copied().unwrap_or(UNK_ROW)
    }

    fn phi(&self, e: f64) -> f64 {
        e + self.cubic_coeff * e * e * e
    }

    fn forward(&self, text: &TokenizedText) -> Forward {
        let n = text.len();
        let rows: Vec<usize> = text.words().iter().map(|w| self.row_of(w)).collect();
        let mut pooled = Array1::zeros(self.dim);
        for &r in &rows {
            for c in 0..self.dim {
                pooled[c] += self.phi(self.embeddings[(r, c)]);
            }
        }
        pooled.mapv_inplace(|v| v / n as f64);

        let mut logits = self.head_weights.dot(&pooled) + &self.head_bias;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        logits.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = logits.iter().sum();
        logits.mapv_inplace(|v| v / sum);
        Forward {
            rows,
            pooled,
            probs: logits,
        }
    }

    /// Cross-entropy of the model against `target_label` (1-based).
    pub fn loss(&self, text: &TokenizedText, target_label: usize) -> f64 {
        let fwd = self.forward(text);
        -fwd.probs[target_label - 1].max(f64::MIN_POSITIVE).ln()
    }

    /// Exact per-slot gradients of the cross-entropy loss at each word's
    /// embedding: returns `(loss, n x d)` with one row per word position.
    pub fn word_gradients(
        &self,
        text: &TokenizedText,
        target_label: usize,
    ) -> Result<(f64, Array2<f64>)> {
        if target_label == 0 || target_label > self.classes {
            return Err(Error::InvalidConfig(format!(
                "target label {target_label} outside 1..={}",
                self.classes
            )));
        }
        let n = text.len();
        let fwd = self.forward(text);
        let loss = -fwd.probs[target_label - 1].max(f64::MIN_POSITIVE).ln();

        let mut g_logits = fwd.probs.clone();
        g_logits[target_label - 1] -= 1.0;
        let g_pooled = self.head_weights.t().dot(&g_logits);

        let mut grads = Array2::zeros((n, self.dim));
        for (t, &r) in fwd.rows.iter().enumerate() {
            for c in 0..self.dim {
                let e = self.embeddings[(r, c)];
                grads[(t, c)] =
                    (1.0 + 3.0 * self.cubic_coeff * e * e) * g_pooled[c] / n as f64;
            }
        }
        Ok((loss, grads))
    }

    fn clamp_embedding_norms(&mut self, max_norm: f64) {
        let rows = self.embeddings.nrows();
        for r in 0..rows {
            let norm: f64 = (0..self.dim)
                .map(|c| self.embeddings[(r, c)].powi(2))
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                let scale = max_norm / norm;
                for c in 0..self.dim {
                    self.embeddings[(r, c)] *= scale;
                }
            }
        }
    }

    fn batch_step(&mut self, corpus: &[(TokenizedText, usize)], lr: f64, decay: f64) {
        let scale = 1.0 / corpus.len() as f64;
        let mut row_deltas: BTreeMap<usize, Array1<f64>> = BTreeMap::new();
        let mut grad_w: Array2<f64> = Array2::zeros((self.classes, self.dim));
        let mut grad_b: Array1<f64> = Array1::zeros(self.classes);

        for (text, target_label) in corpus {
            let n = text.len();
            let fwd = self.forward(text);
            let mut g_logits = fwd.probs.clone();
            g_logits[target_label - 1] -= 1.0;
            let g_pooled = self.head_weights.t().dot(&g_logits);

            for &r in &fwd.rows {
                let entry = row_deltas
                    .entry(r)
                    .or_insert_with(|| Array1::zeros(self.dim));
                for c in 0..self.dim {
                    let e = self.embeddings[(r, c)];
                    entry[c] +=
                        scale * (1.0 + 3.0 * self.cubic_coeff * e * e) * g_pooled[c] / n as f64;
                }
            }
            for cl in 0..self.classes {
                for c in 0..self.dim {
                    grad_w[(cl, c)] += scale * g_logits[cl] * fwd.pooled[c];
                }
                grad_b[cl] += scale * g_logits[cl];
            }
        }

        for (r, delta) in row_deltas {
            for c in 0..self.dim {
                let e = self.embeddings[(r, c)];
                self.embeddings[(r, c)] -= lr * (delta[c] + decay * e);
            }
        }
        for cl in 0..self.classes {
            for c in 0..self.dim {
                let w = self.head_weights[(cl, c)];
                self.head_weights[(cl, c)] -= lr * (grad_w[(cl, c)] + decay * w);
            }
            self.head_bias[cl] -= lr * grad_b[cl];
        }
    }

    /// Fraction of the corpus the model labels correctly.
    pub fn accuracy(&self, corpus: &[(String, usize)]) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut hits = 0usize;
        for (raw, label) in corpus {
            let text = crate::text::tokenize(raw)?;
            let fwd = self.forward(&text);
            let pred = ConfidenceVector::new(normalized(fwd.probs))?.argmax_label();
            if pred == *label {
                hits += 1;
            }
        }
        Ok(hits as f64 / corpus.len() as f64)
    }

    /// L2 norm of a word's embedding row (UNK row for unknown words).
    pub fn embedding_norm(&self, word: &str) -> f64 {
        let r = self.row_of(word);
        (0..self.dim)
            .map(|c| self.embeddings[(r, c)].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Copy of the model with one coordinate of one word's embedding nudged.
    /// Used by finite-difference gradient checks.
    pub fn with_embedding_nudged(&self, word: &str, coord: usize, delta: f64) -> Self {
        let mut clone = self.clone();
        let row = clone.row_of(word);
        clone.embeddings[(row, coord)] += delta;
        clone
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

fn normalized(probs: Array1<f64>) -> Vec<f64> {
    let sum: f64 = probs.iter().sum();
    probs.iter().map(|&p| p / sum).collect()
}

impl VictimModel for ToyVictimModel {
    fn classify_batch(&self, texts: &[TokenizedText]) -> Result<Vec<ConfidenceVector>> {
        texts
            .iter()
            .map(|t| ConfidenceVector::new(normalized(self.forward(t).probs)))
            .collect()
    }

    fn class_count(&self) -> usize {
        self.classes
    }
}

impl GradientCapableVictim for ToyVictimModel {
    fn loss_and_gradient_norms(
        &self,
        text: &TokenizedText,
        target_label: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let (loss, grads) = self.word_gradients(text, target_label)?;
        let norms = grads
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok((loss, norms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predict;
    use crate::text::tokenize;

    fn tiny_corpus() -> Vec<(String, usize)> {
        vec![
            ("the day was superb indeed".to_string(), 1),
            ("the trip felt superb overall".to_string(), 1),
            ("a day so glorious today".to_string(), 1),
            ("the day was dismal indeed".to_string(), 2),
            ("the trip felt dismal overall".to_string(), 2),
            ("a day so wretched today".to_string(), 2),
        ]
    }

    #[test]
    fn sentinel_corpus_trains_accurately() {
        let corpus = tiny_corpus();
        let model = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        assert!(model.accuracy(&corpus).unwrap() >= 0.95);
    }

    #[test]
    fn zero_epochs_is_seeded_init() {
        let corpus = tiny_corpus();
        let cfg = ToyVictimTrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let a = ToyVictimModel::train(&corpus, &cfg).unwrap();
        let b = ToyVictimModel::train(&corpus, &cfg).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.head_weights, b.head_weights);
        // Bias starts at zero before any update.
        assert!(a.head_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_bit_identical() {
        let corpus = tiny_corpus();
        let cfg = ToyVictimTrainConfig::default();
        let a = ToyVictimModel::train(&corpus, &cfg).unwrap();
        let b = ToyVictimModel::train(&corpus, &cfg).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.head_weights, b.head_weights);
        assert_eq!(a.head_bias, b.head_bias);
    }

    #[test]
    fn single_class_rejected() {
        let corpus = vec![
            ("all one class".to_string(), 1),
            ("still one class".to_string(), 1),
        ];
        assert!(matches!(
            ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()),
            Err(Error::SingleClassCorpus)
        ));
    }

    #[test]
    fn prediction_matches_independent_forward() {
        // Brute-force oracle: reimplement the forward pass with plain loops
        // and no shared code beyond raw parameter access.
        let corpus = tiny_corpus();
        let model = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        let text = tokenize("the day was superb today").unwrap();

        let n = text.len() as f64;
        let mut pooled = vec![0.0; model.dim];
        for w in text.words() {
            let r = model.row_of(w);
            for (c, p) in pooled.iter_mut().enumerate() {
                let e = model.embeddings[(r, c)];
                *p += (e + model.cubic_coeff * e * e * e) / n;
            }
        }
        let mut logits = vec![0.0; model.classes];
        for (cl, logit) in logits.iter_mut().enumerate() {
            *logit = model.head_bias[cl];
            for c in 0..model.dim {
                *logit += model.head_weights[(cl, c)] * pooled[c];
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let mut best = 0;
        for i in 1..exps.len() {
            if exps[i] / sum > exps[best] / sum {
                best = i;
            }
        }

        let pred = predict(&model, &text).unwrap();
        assert_eq!(pred.label, best + 1);
        for (i, &e) in exps.iter().enumerate() {
            assert!((pred.confidence.probs()[i] - e / sum).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_head_rows_give_zero_gradients() {
        let corpus = tiny_corpus();
        let mut model =
            ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        // Overwrite the head with identical rows: logit differences vanish,
        // so W^T (p - y) = w * sum(p - y) = 0 exactly.
        for cl in 0..model.classes {
            for c in 0..model.dim {
                model.head_weights[(cl, c)] = 0.37;
            }
            model.head_bias[cl] = 0.0;
        }
        let text = tokenize("the day was superb indeed").unwrap();
        let (_, norms) = model.loss_and_gradient_norms(&text, 1).unwrap();
        assert!(norms.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicate_words_share_importance() {
        let corpus = tiny_corpus();
        let model = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        let text = tokenize("superb day superb day").unwrap();
        let (_, norms) = model.loss_and_gradient_norms(&text, 1).unwrap();
        assert_eq!(norms[0], norms[2]);
        assert_eq!(norms[1], norms[3]);
    }

    #[test]
    fn gradient_scales_inversely_with_length() {
        // Doubling a sentence by repeating it leaves the pooled mean (and so
        // the probabilities) unchanged while halving each slot gradient.
        let corpus = tiny_corpus();
        let model = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        let short = tokenize("the day was superb").unwrap();
        let long = tokenize("the day was superb the day was superb").unwrap();
        let (_, g_short) = model.loss_and_gradient_norms(&short, 1).unwrap();
        let (_, g_long) = model.loss_and_gradient_norms(&long, 1).unwrap();
        for t in 0..short.len() {
            assert!((g_long[t] - g_short[t] / 2.0).abs() < 1e-12);
            assert!((g_long[t + short.len()] - g_short[t] / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = tiny_corpus();
        let model = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("victim.json");
        model.save_json(&path).unwrap();
        let loaded = ToyVictimModel::load_json(&path).unwrap();
        let text = tokenize("the day was superb indeed").unwrap();
        assert_eq!(
            predict(&model, &text).unwrap(),
            predict(&loaded, &text).unwrap()
        );
    }

    #[test]
    fn unknown_words_hit_unk_row() {
        let corpus = tiny_corpus();
        let model = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
        assert_eq!(model.row_of("zzzzz"), UNK_ROW);
        assert_ne!(model.row_of("superb"), UNK_ROW);
    }
}
