//! Detector evaluation over pair datasets: accuracy, F1, AUC, confusion
//! counts, call accounting, and CSV/JSON exports.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{CallLog, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::model::{predict, GradientCapableVictim, LabeledPair, VictimModel};
use crate::reconstruction::MaskedLm;
use crate::text::TokenizedText;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub score: f64,
    /// Ground truth: true when the example is adversarial.
    pub adversarial_truth: bool,
    /// Detector decision at the calibrated threshold.
    pub decision: bool,
    pub origin: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: u32,
    pub false_positives: u32,
    pub true_negatives: u32,
    pub false_negatives: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub f1: f64,
    /// False when no example was flagged or labeled positive, making F1
    /// undefined; the reported value is then 0.
    pub f1_defined: bool,
    pub auc: f64,
    pub auc_defined: bool,
    pub confusion: ConfusionCounts,
    pub per_example: Vec<ExampleOutcome>,
    pub runtime_ms: u64,
    pub calls: CallLog,
    /// Examples per attack origin ("normal" counts the clean half).
    pub origin_counts: BTreeMap<String, usize>,
    pub config: DetectorConfig,
}

impl EvalReport {
    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Writes `score,label` rows (label 1 = adversarial) for histogramming.
pub fn write_score_csv(report: &EvalReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "score,label")?;
    for ex in &report.per_example {
        writeln!(out, "{},{}", ex.score, u8::from(ex.adversarial_truth))?;
    }
    Ok(())
}

/// Rank-based AUC (Mann-Whitney) with average ranks on ties. Returns
/// `None` when either class is absent.
pub fn auc(scored: &[(f64, bool)]) -> Option<f64> {
    let positives = scored.iter().filter(|&&(_, a)| a).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut indexed: Vec<(f64, bool)> = scored.to_vec();
    indexed.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < indexed.len() {
        let mut j = i;
        while j + 1 < indexed.len() && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        // Ranks are 1-based; tied entries share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for entry in &indexed[i..=j] {
            if entry.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Checks that every pair still flips under the victim; returns the indices
/// of violating pairs.
pub fn verify_pairs(victim: &dyn VictimModel, pairs: &[LabeledPair]) -> Result<Vec<usize>> {
    let mut violations = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let normal = predict(victim, &pair.normal)?;
        let adversarial = predict(victim, &pair.adversarial)?;
        if normal.label == adversarial.label {
            violations.push(i);
        }
    }
    Ok(violations)
}

/// Evaluates the detector over labeled examples. Examples run in parallel;
/// aggregation order is fixed by the input order.
pub fn evaluate_examples(
    config: &DetectorConfig,
    examples: &[(TokenizedText, bool, String)],
    victim: &dyn VictimModel,
    mlm: &dyn MaskedLm,
    gradients: Option<&dyn GradientCapableVictim>,
) -> Result<EvalReport> {
    if config.tau.is_none() {
        return Err(Error::UncalibratedDetector);
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();

    let mut detector = Detector::new(config.clone(), victim, mlm)?;
    if let Some(g) = gradients {
        detector = detector.with_gradients(g);
    }

    let verdicts: Vec<_> = examples
        .par_iter()
        .map(|(text, _, _)| detector.detect(text))
        .collect::<Result<_>>()?;

    let mut confusion = ConfusionCounts::default();
    let mut per_example = Vec::with_capacity(examples.len());
    let mut calls = CallLog::default();
    let mut origin_counts: BTreeMap<String, usize> = BTreeMap::new();
    for ((_, truth, origin), verdict) in examples.iter().zip(&verdicts) {
        match (verdict.adversarial, *truth) {
            (true, true) => confusion.true_positives += 1,
            (true, false) => confusion.false_positives += 1,
            (false, true) => confusion.false_negatives += 1,
            (false, false) => confusion.true_negatives += 1,
        }
        calls.add(&verdict.calls);
        *origin_counts.entry(origin.clone()).or_default() += 1;
        per_example.push(ExampleOutcome {
            score: verdict.score.value,
            adversarial_truth: *truth,
            decision: verdict.adversarial,
            origin: origin.clone(),
        });
    }

    let total = examples.len() as f64;
    let accuracy =
        (confusion.true_positives + confusion.true_negatives) as f64 / total;
    let f1_denominator = 2 * confusion.true_positives
        + confusion.false_positives
        + confusion.false_negatives;
    let (f1, f1_defined) = if f1_denominator == 0 {
        (0.0, false)
    } else {
        (
            2.0 * confusion.true_positives as f64 / f1_denominator as f64,
            true,
        )
    };
    let scored: Vec<(f64, bool)> = per_example
        .iter()
        .map(|ex| (ex.score, ex.adversarial_truth))
        .collect();
    let (auc_value, auc_defined) = match auc(&scored) {
        Some(v) => (v, true),
        None => (0.0, false),
    };

    Ok(EvalReport {
        accuracy,
        f1,
        f1_defined,
        auc: auc_value,
        auc_defined,
        confusion,
        per_example,
        runtime_ms: start.elapsed().as_millis() as u64,
        calls,
        origin_counts,
        config: config.clone(),
    })
}

/// Evaluates over pairs: each pair contributes its normal member (origin
/// "normal") and its adversarial member (origin = attack id).
pub fn evaluate(
    config: &DetectorConfig,
    pairs: &[LabeledPair],
    victim: &dyn VictimModel,
    mlm: &dyn MaskedLm,
    gradients: Option<&dyn GradientCapableVictim>,
) -> Result<EvalReport> {
    let mut examples = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        examples.push((pair.normal.clone(), false, "normal".to_string()));
        examples.push((pair.adversarial.clone(), true, pair.origin.clone()));
    }
    evaluate_examples(config, &examples, victim, mlm, gradients)
}
