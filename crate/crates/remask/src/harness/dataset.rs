//! JSON Lines datasets: corpora of `{"text", "label"}` rows and attack
//! pairs of `{"normal", "adversarial", "origin"}` rows.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{LabeledPair, VictimModel};

pub use super::corpus::LabeledText;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub normal: String,
    pub adversarial: String,
    pub origin: String,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value = serde_json::from_str(trimmed).map_err(|e| {
            Error::InvalidConfig(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut writer, row)?;
        writeln!(writer)?;
    }
    Ok(())
}

pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<LabeledText>> {
    read_jsonl(path)
}

pub fn write_corpus_jsonl(path: &Path, rows: &[LabeledText]) -> Result<()> {
    write_jsonl(path, rows)
}

pub fn read_pairs_jsonl(path: &Path) -> Result<Vec<PairRecord>> {
    read_jsonl(path)
}

pub fn write_pairs_jsonl(path: &Path, rows: &[PairRecord]) -> Result<()> {
    write_jsonl(path, rows)
}

pub fn pair_records(pairs: &[LabeledPair]) -> Vec<PairRecord> {
    pairs
        .iter()
        .map(|p| PairRecord {
            normal: p.normal.raw().to_string(),
            adversarial: p.adversarial.raw().to_string(),
            origin: p.origin.clone(),
        })
        .collect()
}

pub fn records_to_pairs(records: &[PairRecord]) -> Result<Vec<LabeledPair>> {
    records
        .iter()
        .map(|r| {
            Ok(LabeledPair {
                normal: crate::text::tokenize(&r.normal)?,
                adversarial: crate::text::tokenize(&r.adversarial)?,
                origin: r.origin.clone(),
            })
        })
        .collect()
}

/// Loads pairs and re-verifies the flip invariant under `victim`,
/// rejecting the file when any pair no longer flips.
pub fn load_pairs_verified(path: &Path, victim: &dyn VictimModel) -> Result<Vec<LabeledPair>> {
    let pairs = records_to_pairs(&read_pairs_jsonl(path)?)?;
    let violations = super::eval::verify_pairs(victim, &pairs)?;
    if !violations.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "{} of {} pairs no longer flip under this victim (first violation at index {})",
            violations.len(),
            pairs.len(),
            violations[0]
        )));
    }
    Ok(pairs)
}

/// Hex sha256 of a file's bytes; recorded in calibration artifacts so the
/// holdout split can be tied to the exact dataset.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Deterministic 50/50 split of pair indices: the first half calibrates,
/// the second half is held out for evaluation.
pub fn split_pair_indices(count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..count).collect();
    indices.shuffle(&mut rng);
    let half = count.div_ceil(2);
    let calibration = indices[..half].to_vec();
    let holdout = indices[half..].to_vec();
    (calibration, holdout)
}
