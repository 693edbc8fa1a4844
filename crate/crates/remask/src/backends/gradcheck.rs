//! Finite-difference validation of the toy victim's analytic gradients.

use crate::error::{Error, Result};
use crate::text::TokenizedText;

use super::toy_victim::ToyVictimModel;

/// Checks every embedding coordinate of every word slot against a central
/// finite difference and returns the maximum relative error.
///
/// Relative error uses `|analytic - numeric| / max(|analytic|, |numeric|,
/// floor)` with a small floor so near-zero coordinates do not blow up the
/// ratio. The sentence must not repeat words: a slot gradient is taken with
/// the other slots held fixed, which a shared embedding row cannot express.
pub fn max_relative_error(
    model: &ToyVictimModel,
    text: &TokenizedText,
    target_label: usize,
    step: f64,
) -> Result<f64> {
    let mut seen = std::collections::BTreeSet::new();
    for w in text.words() {
        if !seen.insert(w.clone()) {
            return Err(Error::InvalidConfig(format!(
                "finite-difference check needs distinct words, `{w}` repeats"
            )));
        }
    }

    let (_, analytic) = model.word_gradients(text, target_label)?;
    let mut worst = 0.0f64;
    for (t, word) in text.words().iter().enumerate() {
        for coord in 0..model.dim() {
            let plus = model
                .with_embedding_nudged(word, coord, step)
                .loss(text, target_label);
            let minus = model
                .with_embedding_nudged(word, coord, -step)
                .loss(text, target_label);
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[(t, coord)];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
