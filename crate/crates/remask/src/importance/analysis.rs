//! Dataset-level keyword statistics: non-keyword proportions per gamma,
//! oracle/gradient overlap rates, and restricted score distributions.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detection::{evaluate_candidates, DetectorConfig};
use crate::error::{Error, Result};
use crate::masking::{mask_one_by_one, scaled_floor};
use crate::model::{predict, GradientCapableVictim, LabeledPair};
use crate::reconstruction::reconstruct_all;
use crate::text::TokenizedText;

use super::oracle_sets_from_outcomes;

/// Mean non-keyword share per population; the reported value is the
/// pessimistic minimum of the two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionStats {
    pub normal: f64,
    pub adversarial: f64,
    pub final_min: f64,
}

/// Mean `|O \cap G| / |G|` per population, minimum reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub normal: f64,
    pub adversarial: f64,
    pub final_min: f64,
}

/// Everything the per-gamma statistics need about one example, computed
/// once from a full one-by-one reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleAnalysis {
    pub n: usize,
    /// Posterior flip count per position, each in `0..=k`.
    pub flip_counts: Vec<u32>,
    /// Gradient-guided non-keyword set at the configured rate.
    pub gradient_nonkeywords: BTreeSet<usize>,
}

/// One row of the gamma sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: usize,
    pub proportion: ProportionStats,
    pub overlap: OverlapStats,
    /// Restricted flip scores with the fixed `n * k` denominator.
    pub normal_scores: Vec<f64>,
    pub adversarial_scores: Vec<f64>,
    /// Same sums divided by `(kept positions) * k` instead; both views are
    /// reported because the restricted score admits either denominator.
    pub normal_scores_renormalized: Vec<f64>,
    pub adversarial_scores_renormalized: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub k: usize,
    pub rate: f64,
    pub pair_count: usize,
    pub rows: Vec<GammaRow>,
}

impl AnalysisReport {
    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Writes per-gamma score rows as `gamma,score,label` with label 1 for
/// adversarial examples.
pub fn write_distribution_csv(report: &AnalysisReport, mut out: impl Write) -> Result<()> {
    writeln!(out, "gamma,score,label")?;
    for row in &report.rows {
        for s in &row.normal_scores {
            writeln!(out, "{},{},0", row.gamma, s)?;
        }
        for s in &row.adversarial_scores {
            writeln!(out, "{},{},1", row.gamma, s)?;
        }
    }
    Ok(())
}

/// Masking rate used for the gradient-guided sets in analysis. A full
/// (rate 1) configuration has an empty non-keyword set by definition, so
/// the comparison falls back to the default gradient-guided rate.
fn analysis_rate(config: &DetectorConfig) -> f64 {
    if config.rate < 1.0 {
        config.rate
    } else {
        0.3
    }
}

fn analyze_example(
    text: &TokenizedText,
    victim: &dyn GradientCapableVictim,
    mlm: &dyn crate::reconstruction::MaskedLm,
    config: &DetectorConfig,
) -> Result<ExampleAnalysis> {
    let reference = predict(victim, text)?;
    let plan = mask_one_by_one(text, &config.mask_token);
    let recon = reconstruct_all(mlm, &plan, config.k)?;
    let outcomes = evaluate_candidates(&reference, &recon, victim)?;
    // gamma here is a placeholder; the sweep rethresholds flip counts.
    let sets = oracle_sets_from_outcomes(&outcomes, text.len(), 0);

    let (_, norms) = victim.loss_and_gradient_norms(text, reference.label)?;
    let n = text.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]));
    let nonkeyword_count = scaled_floor(1.0 - analysis_rate(config), n);
    let gradient_nonkeywords = order[..nonkeyword_count].iter().copied().collect();

    Ok(ExampleAnalysis {
        n,
        flip_counts: sets.flip_counts,
        gradient_nonkeywords,
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn proportions_at_gamma(examples: &[ExampleAnalysis], gamma: usize) -> Vec<f64> {
    examples
        .iter()
        .map(|ex| {
            let nonkeywords = ex
                .flip_counts
                .iter()
                .filter(|&&c| c <= gamma as u32)
                .count();
            nonkeywords as f64 / ex.n as f64
        })
        .collect()
}

/// Mean non-keyword proportion over paired normals and adversarials at one
/// gamma, computed from full one-by-one reconstructions.
pub fn nonkeyword_proportion(
    pairs: &[LabeledPair],
    gamma: usize,
    victim: &dyn GradientCapableVictim,
    mlm: &dyn crate::reconstruction::MaskedLm,
    config: &DetectorConfig,
) -> Result<ProportionStats> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut normal = Vec::with_capacity(pairs.len());
    let mut adversarial = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let ex_n = analyze_example(&pair.normal, victim, mlm, config)?;
        let ex_a = analyze_example(&pair.adversarial, victim, mlm, config)?;
        normal.push(
            ex_n.flip_counts
                .iter()
                .filter(|&&c| c <= gamma as u32)
                .count() as f64
                / ex_n.n as f64,
        );
        adversarial.push(
            ex_a.flip_counts
                .iter()
                .filter(|&&c| c <= gamma as u32)
                .count() as f64
                / ex_a.n as f64,
        );
    }
    let n = mean(&normal);
    let a = mean(&adversarial);
    Ok(ProportionStats {
        normal: n,
        adversarial: a,
        final_min: n.min(a),
    })
}

/// Mean intersection-over-G per population. Sets are aligned per example;
/// each example's gradient set must be non-empty.
pub fn overlap_rate(
    normal_sets: &[(BTreeSet<usize>, BTreeSet<usize>)],
    adversarial_sets: &[(BTreeSet<usize>, BTreeSet<usize>)],
) -> Result<OverlapStats> {
    if normal_sets.is_empty() || adversarial_sets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rate_of = |sets: &[(BTreeSet<usize>, BTreeSet<usize>)]| -> Result<f64> {
        let mut rates = Vec::with_capacity(sets.len());
        for (i, (oracle, grad)) in sets.iter().enumerate() {
            if grad.is_empty() {
                return Err(Error::EmptyGradientSet { example: i });
            }
            let inter = oracle.intersection(grad).count();
            rates.push(inter as f64 / grad.len() as f64);
        }
        Ok(mean(&rates))
    };
    let n = rate_of(normal_sets)?;
    let a = rate_of(adversarial_sets)?;
    Ok(OverlapStats {
        normal: n,
        adversarial: a,
        final_min: n.min(a),
    })
}

fn scores_at_gamma(examples: &[ExampleAnalysis], gamma: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut fixed = Vec::with_capacity(examples.len());
    let mut renorm = Vec::with_capacity(examples.len());
    for ex in examples {
        let kept: Vec<u32> = ex
            .flip_counts
            .iter()
            .copied()
            .filter(|&c| c > gamma as u32)
            .collect();
        let flips: u32 = kept.iter().sum();
        fixed.push(flips as f64 / (ex.n * k) as f64);
        let denom = kept.len() * k;
        renorm.push(if denom == 0 {
            0.0
        } else {
            flips as f64 / denom as f64
        });
    }
    (fixed, renorm)
}

/// Full gamma sweep over a pair dataset: proportions, overlaps, and
/// restricted score distributions for every `gamma in 0..=k`.
pub fn analyze(
    pairs: &[LabeledPair],
    victim: &dyn GradientCapableVictim,
    mlm: &dyn crate::reconstruction::MaskedLm,
    config: &DetectorConfig,
) -> Result<AnalysisReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut normal = Vec::with_capacity(pairs.len());
    let mut adversarial = Vec::with_capacity(pairs.len());
    for pair in pairs {
        normal.push(analyze_example(&pair.normal, victim, mlm, config)?);
        adversarial.push(analyze_example(&pair.adversarial, victim, mlm, config)?);
    }

    let mut rows = Vec::with_capacity(config.k + 1);
    for gamma in 0..=config.k {
        let prop_n = proportions_at_gamma(&normal, gamma);
        let prop_a = proportions_at_gamma(&adversarial, gamma);
        let pn = mean(&prop_n);
        let pa = mean(&prop_a);

        let sets_for = |examples: &[ExampleAnalysis]| {
            examples
                .iter()
                .map(|ex| {
                    let oracle: BTreeSet<usize> = (0..ex.n)
                        .filter(|&i| ex.flip_counts[i] <= gamma as u32)
                        .collect();
                    (oracle, ex.gradient_nonkeywords.clone())
                })
                .collect::<Vec<_>>()
        };
        let overlap = overlap_rate(&sets_for(&normal), &sets_for(&adversarial))?;

        let (normal_scores, normal_scores_renormalized) =
            scores_at_gamma(&normal, gamma, config.k);
        let (adversarial_scores, adversarial_scores_renormalized) =
            scores_at_gamma(&adversarial, gamma, config.k);

        rows.push(GammaRow {
            gamma,
            proportion: ProportionStats {
                normal: pn,
                adversarial: pa,
                final_min: pn.min(pa),
            },
            overlap,
            normal_scores,
            adversarial_scores,
            normal_scores_renormalized,
            adversarial_scores_renormalized,
        });
    }

    Ok(AnalysisReport {
        k: config.k,
        rate: analysis_rate(config),
        pair_count: pairs.len(),
        rows,
    })
}
