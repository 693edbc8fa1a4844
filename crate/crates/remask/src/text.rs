//! Word-level text representation with exact round-tripping.
//!
//! Splitting is plain whitespace segmentation: punctuation stays attached to
//! its word. Each word keeps its byte span into the original string, so a
//! single word can be swapped out while every other byte of the input
//! (including runs of whitespace) is preserved exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A text split into whitespace-delimited words.
///
/// Invariants, enforced at construction:
/// - at least one word,
/// - spans are non-overlapping and strictly increasing byte ranges into `raw`,
/// - `detokenize()` reproduces `raw` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    words: Vec<String>,
    raw: String,
    spans: Vec<(usize, usize)>,
}

impl TokenizedText {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Number of words, `n >= 1`.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn spans(&self) -> &[(usize, usize)] {
        &self.spans
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    /// Rebuilds the original string by splicing the words into their spans.
    /// The gaps between spans come from `raw`, so whitespace survives intact.
    pub fn detokenize(&self) -> String {
        let mut out = String::with_capacity(self.raw.len());
        let mut cursor = 0;
        for (word, &(start, end)) in self.words.iter().zip(&self.spans) {
            out.push_str(&self.raw[cursor..start]);
            out.push_str(word);
            cursor = end;
        }
        out.push_str(&self.raw[cursor..]);
        out
    }

    /// Returns a copy with the word at `index` replaced, shifting later spans
    /// by the length difference. `replacement` must itself be a single word.
    pub fn with_word_replaced(&self, index: usize, replacement: &str) -> TokenizedText {
        debug_assert!(
            !replacement.is_empty() && !replacement.chars().any(char::is_whitespace),
            "replacement must be a single non-empty word"
        );
        let (start, end) = self.spans[index];
        let mut raw = String::with_capacity(self.raw.len());
        raw.push_str(&self.raw[..start]);
        raw.push_str(replacement);
        raw.push_str(&self.raw[end..]);

        let delta = replacement.len() as isize - (end - start) as isize;
        let mut words = self.words.clone();
        words[index] = replacement.to_string();
        let spans = self
            .spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| {
                if i < index {
                    (s, e)
                } else if i == index {
                    (s, (e as isize + delta) as usize)
                } else {
                    ((s as isize + delta) as usize, (e as isize + delta) as usize)
                }
            })
            .collect();

        TokenizedText { words, raw, spans }
    }
}

/// Splits `raw` on whitespace, recording byte spans.
///
/// Fails with [`Error::EmptyInput`] when the string holds no words.
pub fn tokenize(raw: &str) -> Result<TokenizedText> {
    let mut words = Vec::new();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;

    for (idx, ch) in raw.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                words.push(raw[s..idx].to_string());
                spans.push((s, idx));
            }
        } else if start.is_none() {
            start = Some(idx);
        }
    }
    if let Some(s) = start {
        words.push(raw[s..].to_string());
        spans.push((s, raw.len()));
    }

    if words.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(TokenizedText {
        words,
        raw: raw.to_string(),
        spans,
    })
}

/// Builds a text from bare words joined by single spaces. Used at wire
/// boundaries where only a word list is transmitted.
pub fn from_words(words: &[String]) -> Result<TokenizedText> {
    tokenize(&words.join(" "))
}
