//! Instrumented wrappers that count backend traffic.
//!
//! Counters are atomic so wrapped backends stay safe to share; `texts`
//! counts individual classified texts (not batches), which is the unit the
//! cost accounting cares about.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;
use crate::model::{ConfidenceVector, GradientCapableVictim, VictimModel};
use crate::reconstruction::{FillCandidate, MaskedLm};
use crate::text::TokenizedText;

pub struct CountingVictim<'a> {
    inner: &'a dyn VictimModel,
    texts: AtomicU64,
    batches: AtomicU64,
}

impl<'a> CountingVictim<'a> {
    pub fn new(inner: &'a dyn VictimModel) -> Self {
        Self {
            inner,
            texts: AtomicU64::new(0),
            batches: AtomicU64::new(0),
        }
    }

    pub fn texts_classified(&self) -> u64 {
        self.texts.load(Ordering::Relaxed)
    }

    pub fn batches(&self) -> u64 {
        self.batches.load(Ordering::Relaxed)
    }
}

impl VictimModel for CountingVictim<'_> {
    fn classify_batch(&self, texts: &[TokenizedText]) -> Result<Vec<ConfidenceVector>> {
        self.texts.fetch_add(texts.len() as u64, Ordering::Relaxed);
        self.batches.fetch_add(1, Ordering::Relaxed);
        self.inner.classify_batch(texts)
    }

    fn class_count(&self) -> usize {
        self.inner.class_count()
    }
}

pub struct CountingMaskedLm<'a> {
    inner: &'a dyn MaskedLm,
    fills: AtomicU64,
}

impl<'a> CountingMaskedLm<'a> {
    pub fn new(inner: &'a dyn MaskedLm) -> Self {
        Self {
            inner,
            fills: AtomicU64::new(0),
        }
    }

    pub fn fills(&self) -> u64 {
        self.fills.load(Ordering::Relaxed)
    }
}

impl MaskedLm for CountingMaskedLm<'_> {
    fn fill(&self, rendered: &[String], mask_index: usize, k: usize) -> Result<Vec<FillCandidate>> {
        self.fills.fetch_add(1, Ordering::Relaxed);
        self.inner.fill(rendered, mask_index, k)
    }
}

pub struct CountingGradientVictim<'a> {
    inner: &'a dyn GradientCapableVictim,
    texts: AtomicU64,
    backward_passes: AtomicU64,
}

impl<'a> CountingGradientVictim<'a> {
    pub fn new(inner: &'a dyn GradientCapableVictim) -> Self {
        Self {
            inner,
            texts: AtomicU64::new(0),
            backward_passes: AtomicU64::new(0),
        }
    }

    pub fn texts_classified(&self) -> u64 {
        self.texts.load(Ordering::Relaxed)
    }

    pub fn backward_passes(&self) -> u64 {
        self.backward_passes.load(Ordering::Relaxed)
    }
}

impl VictimModel for CountingGradientVictim<'_> {
    fn classify_batch(&self, texts: &[TokenizedText]) -> Result<Vec<ConfidenceVector>> {
        self.texts.fetch_add(texts.len() as u64, Ordering::Relaxed);
        self.inner.classify_batch(texts)
    }

    fn class_count(&self) -> usize {
        self.inner.class_count()
    }
}

impl GradientCapableVictim for CountingGradientVictim<'_> {
    fn loss_and_gradient_norms(
        &self,
        text: &TokenizedText,
        target_label: usize,
    ) -> Result<(f64, Vec<f64>)> {
        self.backward_passes.fetch_add(1, Ordering::Relaxed);
        self.inner.loss_and_gradient_norms(text, target_label)
    }
}
