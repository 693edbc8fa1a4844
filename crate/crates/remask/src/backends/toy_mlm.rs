//! A count-based masked language model: unigram and bigram tables with
//! add-alpha smoothing, fitted on a word-level corpus.
//!
//! A candidate `w` for a masked slot is scored by
//! `ln p(w | left) + ln p(right | w) + ln p(w)`; sentence edges use the
//! boundary tokens. Ties break lexicographically, so the model is fully
//! deterministic given `(corpus, smoothing)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::reconstruction::{FillCandidate, MaskedLm};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const DEFAULT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyMaskedLm {
    unigrams: BTreeMap<String, u64>,
    bigrams: BTreeMap<(String, String), u64>,
    /// Total bigram mass starting at each token (including boundary tokens).
    forward_totals: BTreeMap<String, u64>,
    total_words: u64,
    vocab: Vec<String>,
    smoothing: f64,
}

impl ToyMaskedLm {
    /// Counts unigrams and bigrams over the sentences. Each sentence is
    /// bracketed by [`BOS`]/[`EOS`] for the bigram pass; the boundary tokens
    /// never enter the candidate vocabulary.
    pub fn fit<I, S>(sentences: I, smoothing: f64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        let mut unigrams: BTreeMap<String, u64> = BTreeMap::new();
        let mut bigrams: BTreeMap<(String, String), u64> = BTreeMap::new();
        let mut forward_totals: BTreeMap<String, u64> = BTreeMap::new();
        let mut total_words = 0u64;

        for sentence in sentences {
            let words = sentence.as_ref();
            if words.is_empty() {
                continue;
            }
            for w in words {
                *unigrams.entry(w.clone()).or_default() += 1;
                total_words += 1;
            }
            let mut prev = BOS.to_string();
            for w in words.iter().chain(std::iter::once(&EOS.to_string())) {
                *bigrams.entry((prev.clone(), w.clone())).or_default() += 1;
                *forward_totals.entry(prev.clone()).or_default() += 1;
                prev = w.clone();
            }
        }

        let vocab: Vec<String> = unigrams.keys().cloned().collect();
        Self {
            unigrams,
            bigrams,
            forward_totals,
            total_words,
            vocab,
            smoothing,
        }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn vocab_size(&self) -> f64 {
        self.vocab.len() as f64
    }

    fn bigram(&self, a: &str, b: &str) -> u64 {
        self.bigrams
            .get(&(a.to_string(), b.to_string()))
            .copied()
            .unwrap_or(0)
    }

    fn forward_total(&self, a: &str) -> u64 {
        self.forward_totals.get(a).copied().unwrap_or(0)
    }

    /// Smoothed log score of `word` between `left` and `right`.
    pub fn score_word(&self, word: &str, left: &str, right: &str) -> f64 {
        let a = self.smoothing;
        let v = self.vocab_size();
        let p_left = (self.bigram(left, word) as f64 + a) / (self.forward_total(left) as f64 + a * v);
        let p_right = (self.bigram(word, right) as f64 + a) / (self.forward_total(word) as f64 + a * v);
        let p_uni = (self.unigrams.get(word).copied().unwrap_or(0) as f64 + a)
            / (self.total_words as f64 + a * v);
        p_left.ln() + p_right.ln() + p_uni.ln()
    }

    /// Fraction of single-mask queries over the corpus whose true word comes
    /// back within the top-`k` candidates.
    pub fn restoration_rate<I, S>(&self, sentences: I, k: usize) -> f64
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        let mut queries = 0usize;
        let mut hits = 0usize;
        for sentence in sentences {
            let words = sentence.as_ref();
            for i in 0..words.len() {
                let mut rendered = words.to_vec();
                rendered[i] = crate::masking::DEFAULT_MASK_TOKEN.to_string();
                let candidates = self
                    .fill(&rendered, i, k)
                    .expect("toy fill is infallible on a non-empty vocab");
                queries += 1;
                if candidates.iter().any(|c| c.word == words[i]) {
                    hits += 1;
                }
            }
        }
        if queries == 0 {
            return 0.0;
        }
        hits as f64 / queries as f64
    }
}

impl MaskedLm for ToyMaskedLm {
    fn fill(&self, rendered: &[String], mask_index: usize, k: usize) -> Result<Vec<FillCandidate>> {
        let left = if mask_index == 0 {
            BOS
        } else {
            rendered[mask_index - 1].as_str()
        };
        let right = if mask_index + 1 >= rendered.len() {
            EOS
        } else {
            rendered[mask_index + 1].as_str()
        };

        let mut scored: Vec<FillCandidate> = self
            .vocab
            .iter()
            .map(|w| FillCandidate {
                word: w.clone(),
                score: self.score_word(w, left, right),
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.word.cmp(&b.word)));
        scored.truncate(k);
        Ok(scored)
    }
}
