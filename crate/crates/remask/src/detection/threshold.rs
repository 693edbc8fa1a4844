//! Offline threshold calibration: pick the tau that maximizes F1 for the
//! adversarial class under the decision rule `adversarial iff score > tau`.
//!
//! The candidate set is finite and exhaustive over decision boundaries:
//! midpoints of consecutive distinct score values realize every interior
//! cut, and the endpoints 0 and 1 realize the all-adversarial and
//! all-normal cuts. Among candidates tied on F1, interior midpoints win
//! over endpoints (they carry margin on both sides), then the smallest tau.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::MaskStrategy;

/// Result of calibrating a threshold on scored examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    pub f1: f64,
    pub true_positives: u32,
    pub false_positives: u32,
    pub false_negatives: u32,
    /// Set when every example scored the same value; tau is that value and
    /// the threshold cannot separate anything.
    pub degenerate: bool,
}

/// Confusion counts at a threshold; positive class is "adversarial".
pub fn f1_counts(scored: &[(f64, bool)], tau: f64) -> (u32, u32, u32) {
    let mut tp = 0;
    let mut fp = 0;
    let mut fnn = 0;
    for &(score, adversarial) in scored {
        let flagged = score > tau;
        match (flagged, adversarial) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    (tp, fp, fnn)
}

pub fn f1_from_counts(tp: u32, fp: u32, fnn: u32) -> f64 {
    let denom = 2 * tp + fp + fnn;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Calibrates tau over `(score, is_adversarial)` pairs.
///
/// Needs at least one example of each label. When all scores coincide the
/// result is flagged degenerate with tau equal to that score.
pub fn calibrate_threshold(scored: &[(f64, bool)]) -> Result<Calibration> {
    if scored.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if scored.iter().all(|&(_, a)| a) || scored.iter().all(|&(_, a)| !a) {
        return Err(Error::MissingLabel);
    }

    let mut values: Vec<f64> = scored.iter().map(|&(s, _)| s).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    if values.len() == 1 {
        let tau = values[0];
        let (tp, fp, fnn) = f1_counts(scored, tau);
        log::warn!("threshold calibration is degenerate: every score equals {tau}");
        return Ok(Calibration {
            tau,
            f1: f1_from_counts(tp, fp, fnn),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fnn,
            degenerate: true,
        });
    }

    // (tau, is_midpoint)
    let mut candidates: Vec<(f64, bool)> = values
        .windows(2)
        .map(|w| ((w[0] + w[1]) / 2.0, true))
        .collect();
    candidates.push((0.0, false));
    candidates.push((1.0, false));

    let mut best: Option<(f64, bool, u32, u32, u32, f64)> = None;
    for &(tau, midpoint) in &candidates {
        let (tp, fp, fnn) = f1_counts(scored, tau);
        let f1 = f1_from_counts(tp, fp, fnn);
        let better = match best {
            None => true,
            Some((b_tau, b_mid, .., b_f1)) => {
                f1 > b_f1
                    || (f1 == b_f1 && midpoint && !b_mid)
                    || (f1 == b_f1 && midpoint == b_mid && tau < b_tau)
            }
        };
        if better {
            best = Some((tau, midpoint, tp, fp, fnn, f1));
        }
    }
    let (tau, _, tp, fp, fnn, f1) = best.expect("candidate set is non-empty");
    Ok(Calibration {
        tau,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fnn,
        degenerate: false,
    })
}

/// One bucket of the score histogram persisted with calibration artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub normal: u64,
    pub adversarial: u64,
}

/// Fixed-width histogram over `[0, 1]`; the top bin is closed on both ends.
pub fn histogram(scored: &[(f64, bool)], bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let width = 1.0 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            normal: 0,
            adversarial: 0,
        })
        .collect();
    for &(score, adversarial) in scored {
        let idx = ((score / width) as usize).min(bins - 1);
        if adversarial {
            out[idx].adversarial += 1;
        } else {
            out[idx].normal += 1;
        }
    }
    out
}

/// The persisted calibration document, including the split that produced it
/// so evaluation can hold out the complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub tau: f64,
    pub r: f64,
    pub k: usize,
    pub strategy: MaskStrategy,
    pub f1_at_tau: f64,
    pub score_histogram: Vec<HistogramBin>,
    pub degenerate: bool,
    /// Seed of the deterministic shuffle that split pairs into the
    /// calibration half and the held-out half.
    pub split_seed: u64,
    /// Hex sha256 of the pairs file the split indices refer to.
    pub pairs_digest: String,
    /// Pair indices used for calibration; evaluation on the same file uses
    /// the complement.
    pub calibration_pair_indices: Vec<usize>,
}

impl CalibrationArtifact {
    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_scores_pick_the_midpoint() {
        let scored = vec![
            (0.0, false),
            (0.0, false),
            (0.8, true),
            (0.8, true),
        ];
        let cal = calibrate_threshold(&scored).unwrap();
        assert_eq!(cal.tau, 0.4);
        assert_eq!(cal.f1, 1.0);
        assert!(!cal.degenerate);
    }

    #[test]
    fn interleaved_scores_match_exhaustive_scan() {
        // Brute-force oracle: evaluate every candidate cut with an
        // independent F1 computation and keep the best value.
        let scored = vec![
            (0.05, false),
            (0.10, true),
            (0.12, false),
            (0.30, true),
            (0.31, false),
            (0.55, true),
            (0.70, true),
            (0.02, false),
        ];
        let cal = calibrate_threshold(&scored).unwrap();

        let mut values: Vec<f64> = scored.iter().map(|&(s, _)| s).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut cuts: Vec<f64> = values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        cuts.push(0.0);
        cuts.push(1.0);
        let mut best = 0.0f64;
        for tau in cuts {
            let mut tp = 0u32;
            let mut fp = 0u32;
            let mut fnn = 0u32;
            for &(s, adv) in &scored {
                if s > tau {
                    if adv {
                        tp += 1
                    } else {
                        fp += 1
                    }
                } else if adv {
                    fnn += 1
                }
            }
            let f1 = if 2 * tp + fp + fnn == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fnn) as f64
            };
            best = best.max(f1);
        }
        assert_eq!(cal.f1, best);
    }

    #[test]
    fn identical_scores_are_degenerate() {
        let scored = vec![(0.5, true), (0.5, false)];
        let cal = calibrate_threshold(&scored).unwrap();
        assert!(cal.degenerate);
        assert_eq!(cal.tau, 0.5);
    }

    #[test]
    fn single_label_rejected() {
        assert!(matches!(
            calibrate_threshold(&[(0.1, true), (0.9, true)]),
            Err(Error::MissingLabel)
        ));
        assert!(matches!(
            calibrate_threshold(&[(0.1, false)]),
            Err(Error::MissingLabel)
        ));
        assert!(matches!(calibrate_threshold(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn inverted_scores_fall_back_to_endpoint_cut() {
        // The normal example scores above the adversarial one; flagging
        // everything beats every interior cut.
        let scored = vec![(0.9, false), (0.5, true)];
        let cal = calibrate_threshold(&scored).unwrap();
        assert_eq!(cal.tau, 0.0);
        let expected = 2.0 / 3.0;
        assert!((cal.f1 - expected).abs() < 1e-12);
    }

    #[test]
    fn histogram_buckets_by_label() {
        let scored = vec![(0.0, false), (0.04, false), (0.5, true), (1.0, true)];
        let bins = histogram(&scored, 20);
        assert_eq!(bins.len(), 20);
        assert_eq!(bins[0].normal, 2);
        assert_eq!(bins[10].adversarial, 1);
        assert_eq!(bins[19].adversarial, 1);
        let total: u64 = bins.iter().map(|b| b.normal + b.adversarial).sum();
        assert_eq!(total, 4);
    }
}
