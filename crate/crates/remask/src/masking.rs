//! Mask-generation strategies.
//!
//! Every variant masks exactly one word. The one-by-one strategy masks each
//! of the `n` words in turn; the gradient-guided strategy first drops the
//! `floor((1-r)*n)` least important words and masks only the remaining
//! `ceil(r*n)` keywords. The oracle-filtered strategy restricts scoring
//! after the fact and reuses the one-by-one plan (see `importance`).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::TokenizedText;

pub const DEFAULT_MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskStrategy {
    /// Mask every word individually (rate fixed at 1).
    OneByOne,
    /// Mask only the top `ceil(r*n)` words by gradient importance.
    GradientGuided,
    /// Full plan, scored only on positions whose posterior flip count
    /// exceeds the configured gamma.
    OracleFiltered,
}

impl std::fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MaskStrategy::OneByOne => write!(f, "one-by-one"),
            MaskStrategy::GradientGuided => write!(f, "gradient-guided"),
            MaskStrategy::OracleFiltered => write!(f, "oracle-filtered"),
        }
    }
}

/// One masked copy of the source: `rendered` differs from the source words
/// in exactly one position, which holds the mask token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedVariant {
    /// 0-based position that was masked.
    pub word_index: usize,
    pub rendered: Vec<String>,
}

/// The ordered set of masked variants produced for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingPlan {
    pub source: TokenizedText,
    /// Variants in ascending original-position order; masked indices are
    /// pairwise distinct.
    pub variants: Vec<MaskedVariant>,
    pub rate: f64,
    pub strategy: MaskStrategy,
    pub mask_token: String,
}

impl MaskingPlan {
    /// True when the plan masks every position of the source.
    pub fn covers_all_positions(&self) -> bool {
        self.variants.len() == self.source.len()
    }
}

/// Positions split into keywords (masked) and non-keywords (skipped),
/// ordered by ascending importance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSelection {
    /// Permutation of `0..n`: positions sorted by ascending importance,
    /// ties keeping original word order.
    pub ordering: Vec<usize>,
    /// First `floor((1-r)*n)` positions of `ordering`.
    pub non_keywords: BTreeSet<usize>,
    /// Remaining `ceil(r*n)` positions.
    pub keywords: BTreeSet<usize>,
}

/// `ceil(rate * n)` with a snap window for float noise: products within
/// `1e-9 * n` of an integer count as that integer, so e.g. `0.3 * 10`
/// yields 3 regardless of rounding direction.
pub fn scaled_ceil(rate: f64, n: usize) -> usize {
    let p = rate * n as f64;
    let nearest = p.round();
    let v = if (p - nearest).abs() <= 1e-9 * (n.max(1) as f64) {
        nearest
    } else {
        p.ceil()
    };
    (v as usize).min(n)
}

/// `floor(rate * n)` with the same snap window as [`scaled_ceil`].
pub fn scaled_floor(rate: f64, n: usize) -> usize {
    let p = rate * n as f64;
    let nearest = p.round();
    let v = if (p - nearest).abs() <= 1e-9 * (n.max(1) as f64) {
        nearest
    } else {
        p.floor()
    };
    (v as usize).min(n)
}

fn render_masked(words: &[String], index: usize, mask_token: &str) -> Vec<String> {
    let mut rendered = words.to_vec();
    rendered[index] = mask_token.to_string();
    rendered
}

/// Masks each word of `x` in turn: `n` variants, variant `i` masking word `i`.
pub fn mask_one_by_one(x: &TokenizedText, mask_token: &str) -> MaskingPlan {
    let variants = (0..x.len())
        .map(|i| MaskedVariant {
            word_index: i,
            rendered: render_masked(x.words(), i, mask_token),
        })
        .collect();
    MaskingPlan {
        source: x.clone(),
        variants,
        rate: 1.0,
        strategy: MaskStrategy::OneByOne,
        mask_token: mask_token.to_string(),
    }
}

/// Splits positions by importance: stable ascending sort, then the first
/// `floor((1-rate)*n)` positions become non-keywords.
pub fn select_keywords(
    x: &TokenizedText,
    importance: &[f64],
    rate: f64,
) -> Result<KeywordSelection> {
    if importance.len() != x.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: importance.len(),
        });
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "masking rate must lie in (0, 1], got {rate}"
        )));
    }
    let n = x.len();
    let mut ordering: Vec<usize> = (0..n).collect();
    // Stable sort: equal scores keep original word order.
    ordering.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]));

    let keyword_count = scaled_ceil(rate, n);
    let split = n - keyword_count;
    let non_keywords: BTreeSet<usize> = ordering[..split].iter().copied().collect();
    let keywords: BTreeSet<usize> = ordering[split..].iter().copied().collect();
    Ok(KeywordSelection {
        ordering,
        non_keywords,
        keywords,
    })
}

/// Masks exactly the keyword positions, one variant per keyword, emitted in
/// ascending original-position order so downstream feature indices are
/// reproducible.
pub fn mask_selected(
    x: &TokenizedText,
    selection: &KeywordSelection,
    rate: f64,
    mask_token: &str,
) -> Result<MaskingPlan> {
    if selection.keywords.is_empty() {
        return Err(Error::EmptySelection);
    }
    let variants = selection
        .keywords
        .iter()
        .map(|&i| MaskedVariant {
            word_index: i,
            rendered: render_masked(x.words(), i, mask_token),
        })
        .collect();
    Ok(MaskingPlan {
        source: x.clone(),
        variants,
        rate,
        strategy: MaskStrategy::GradientGuided,
        mask_token: mask_token.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;
    use proptest::prelude::*;

    #[test]
    fn one_by_one_masks_every_position() {
        let x = tokenize("a b c d e").unwrap();
        let plan = mask_one_by_one(&x, DEFAULT_MASK_TOKEN);
        assert_eq!(plan.variants.len(), 5);
        for (i, v) in plan.variants.iter().enumerate() {
            assert_eq!(v.word_index, i);
            assert_eq!(v.rendered[i], DEFAULT_MASK_TOKEN);
        }
    }

    #[test]
    fn one_by_one_single_word() {
        let x = tokenize("solo").unwrap();
        let plan = mask_one_by_one(&x, DEFAULT_MASK_TOKEN);
        assert_eq!(plan.variants.len(), 1);
        assert_eq!(plan.variants[0].rendered, vec![DEFAULT_MASK_TOKEN]);
    }

    #[test]
    fn one_by_one_renders_expected_variant() {
        let x = tokenize("the cat sat").unwrap();
        let plan = mask_one_by_one(&x, DEFAULT_MASK_TOKEN);
        assert_eq!(plan.variants[1].rendered, vec!["the", "[MASK]", "sat"]);
    }

    #[test]
    fn selection_orders_by_importance() {
        let x = tokenize("one two three").unwrap();
        let sel = select_keywords(&x, &[0.1, 0.9, 0.5], 0.34).unwrap();
        // floor(0.66*3) = 1 non-keyword, ceil(0.34*3) = ceil(1.02) = 2 keywords.
        assert_eq!(sel.ordering, vec![0, 2, 1]);
        assert_eq!(sel.non_keywords.iter().copied().collect::<Vec<_>>(), [0]);
        assert_eq!(sel.keywords.iter().copied().collect::<Vec<_>>(), [1, 2]);
    }

    #[test]
    fn equal_importance_keeps_original_order() {
        let x = tokenize("a b c d").unwrap();
        let sel = select_keywords(&x, &[0.5; 4], 0.5).unwrap();
        assert_eq!(sel.ordering, vec![0, 1, 2, 3]);
        assert_eq!(sel.non_keywords.iter().copied().collect::<Vec<_>>(), [0, 1]);
    }

    #[test]
    fn length_mismatch_rejected() {
        let x = tokenize("a b c").unwrap();
        assert!(matches!(
            select_keywords(&x, &[0.1, 0.2], 0.5),
            Err(Error::LengthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn selected_plan_masks_only_keywords() {
        let x = tokenize("w0 w1 w2 w3 w4 w5 w6 w7 w8 w9").unwrap();
        let imp: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let sel = select_keywords(&x, &imp, 0.3).unwrap();
        let plan = mask_selected(&x, &sel, 0.3, DEFAULT_MASK_TOKEN).unwrap();
        assert_eq!(plan.variants.len(), 3);
        assert_eq!(
            plan.variants.iter().map(|v| v.word_index).collect::<Vec<_>>(),
            vec![7, 8, 9]
        );
    }

    #[test]
    fn seven_words_rate_point_three() {
        let x = tokenize("a b c d e f g").unwrap();
        let sel = select_keywords(&x, &[0.0; 7], 0.3).unwrap();
        // floor(0.7*7) = 4 non-keywords, ceil(2.1) = 3 keywords.
        assert_eq!(sel.non_keywords.len(), 4);
        assert_eq!(sel.keywords.len(), 3);
        let plan = mask_selected(&x, &sel, 0.3, DEFAULT_MASK_TOKEN).unwrap();
        assert_eq!(plan.variants.len(), 3);
    }

    #[test]
    fn explicit_keyword_set() {
        let x = tokenize("a b c d e f").unwrap();
        let sel = KeywordSelection {
            ordering: vec![0, 2, 3, 5, 1, 4],
            non_keywords: [0, 2, 3, 5].into_iter().collect(),
            keywords: [1, 4].into_iter().collect(),
        };
        let plan = mask_selected(&x, &sel, 0.34, DEFAULT_MASK_TOKEN).unwrap();
        assert_eq!(
            plan.variants.iter().map(|v| v.word_index).collect::<Vec<_>>(),
            vec![1, 4]
        );
    }

    #[test]
    fn empty_selection_rejected() {
        let x = tokenize("a b").unwrap();
        let sel = KeywordSelection {
            ordering: vec![0, 1],
            non_keywords: [0, 1].into_iter().collect(),
            keywords: BTreeSet::new(),
        };
        assert!(matches!(
            mask_selected(&x, &sel, 0.5, DEFAULT_MASK_TOKEN),
            Err(Error::EmptySelection)
        ));
    }

    #[test]
    fn full_rate_selection_equals_one_by_one() {
        let x = tokenize("p q r s").unwrap();
        let sel = select_keywords(&x, &[0.4, 0.1, 0.9, 0.3], 1.0).unwrap();
        assert!(sel.non_keywords.is_empty());
        let selected = mask_selected(&x, &sel, 1.0, DEFAULT_MASK_TOKEN).unwrap();
        let full = mask_one_by_one(&x, DEFAULT_MASK_TOKEN);
        // Same variants in the same (position) order.
        assert_eq!(selected.variants, full.variants);
    }

    proptest! {
        /// floor((1-r)n) + ceil(rn) == n for all n >= 1, r in (0, 1].
        #[test]
        fn floor_ceil_partition(n in 1usize..2000, r_mil in 1u32..=1000) {
            let r = r_mil as f64 / 1000.0;
            prop_assert_eq!(scaled_floor(1.0 - r, n) + scaled_ceil(r, n), n);
        }

        #[test]
        fn variants_differ_in_exactly_one_position(
            words in prop::collection::vec("[a-z]{1,6}", 1..20),
            rate_mil in 1u32..=1000,
        ) {
            let x = tokenize(&words.join(" ")).unwrap();
            let rate = rate_mil as f64 / 1000.0;
            let imp: Vec<f64> = (0..x.len()).map(|i| (i * 7 % 5) as f64).collect();
            let sel = select_keywords(&x, &imp, rate).unwrap();
            let plan = mask_selected(&x, &sel, rate, DEFAULT_MASK_TOKEN).unwrap();
            prop_assert!(plan.variants.len() <= x.len());
            let mut seen = BTreeSet::new();
            for v in &plan.variants {
                prop_assert!(seen.insert(v.word_index));
                let diffs: Vec<usize> = (0..x.len())
                    .filter(|&i| v.rendered[i] != x.words()[i])
                    .collect();
                prop_assert_eq!(&diffs, &vec![v.word_index]);
                prop_assert_eq!(v.rendered[v.word_index].as_str(), DEFAULT_MASK_TOKEN);
            }
        }
    }
}
