//! A stub masked LM that always restores the original word.
//!
//! Built from the text being probed, it answers every fill query with the
//! word that was masked and nothing else, so the rebuilt candidate equals
//! the source bit-for-bit and the flip score is exactly zero. Useful as the
//! null backend in tests: any non-zero score implicates the pipeline, not
//! the model.

use crate::error::Result;
use crate::reconstruction::{FillCandidate, MaskedLm};
use crate::text::TokenizedText;

pub struct RestoringMaskedLm {
    words: Vec<String>,
}

impl RestoringMaskedLm {
    pub fn for_text(text: &TokenizedText) -> Self {
        Self {
            words: text.words().to_vec(),
        }
    }
}

impl MaskedLm for RestoringMaskedLm {
    fn fill(&self, _rendered: &[String], mask_index: usize, _k: usize) -> Result<Vec<FillCandidate>> {
        Ok(vec![FillCandidate {
            word: self.words[mask_index].clone(),
            score: 0.0,
        }])
    }
}
