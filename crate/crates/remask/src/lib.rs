//! remask detects adversarial inputs to text classifiers.
//!
//! The engine masks words one at a time, asks a masked language model for
//! the top-k reconstructions of each masked slot, and measures how often
//! the victim classifier's prediction changes on the rebuilt texts. Normal
//! text reconstructs to itself and scores near zero; adversarial text
//! snaps back toward the distribution the masked LM was trained on, so its
//! reconstructions flip the prediction and the score rises. A threshold
//! calibrated offline turns the score into a verdict.
//!
//! Masking every word is expensive, so the gradient-guided strategy ranks
//! words by the L2 norm of the loss gradient at their embeddings and masks
//! only the top `ceil(r * n)` of them (default `r = 0.3`), cutting masked-LM
//! and victim traffic to that fraction at near-identical verdicts.
//!
//! ```
//! use remask::backends::{RestoringMaskedLm, ToyVictimModel, ToyVictimTrainConfig};
//! use remask::detection::{Detector, DetectorConfig};
//!
//! let corpus = vec![
//!     ("the day was superb indeed".to_string(), 1),
//!     ("a trip so glorious today".to_string(), 1),
//!     ("the day was dismal indeed".to_string(), 2),
//!     ("a trip so wretched today".to_string(), 2),
//! ];
//! let victim = ToyVictimModel::train(&corpus, &ToyVictimTrainConfig::default()).unwrap();
//! let text = remask::text::tokenize("the day was superb indeed").unwrap();
//! let mlm = RestoringMaskedLm::for_text(&text);
//!
//! let config = DetectorConfig::one_by_one().with_tau(0.05);
//! let detector = Detector::new(config, &victim, &mlm).unwrap();
//! let verdict = detector.detect(&text).unwrap();
//! assert!(!verdict.adversarial);
//! ```

pub mod backends;
pub mod config;
pub mod detection;
pub mod error;
pub mod harness;
pub mod importance;
pub mod masking;
pub mod model;
pub mod reconstruction;
pub mod text;

pub use error::{BackendError, Error, Result};
