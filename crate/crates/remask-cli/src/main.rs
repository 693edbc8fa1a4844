//! Command-line harness for the remask detector: toy-model training,
//! attack generation, threshold calibration, detection, evaluation,
//! posterior analysis, and the mock protocol server.
//!
//! Exit codes: 0 success, 2 validation error, 3 backend failure.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use remask::backends::mock::{serve_blocking, MockState};
use remask::backends::remote::{RemoteBackendConfig, RemoteClient, RemoteMaskedLm, RemoteVictim};
use remask::backends::{ResponseCache, ToyMaskedLm, ToyVictimModel, ToyVictimTrainConfig};
use remask::config::{load_run_config, BackendKind, RunConfig};
use remask::detection::{
    calibrate_threshold, histogram, CalibrationArtifact, Detector, DetectorConfig,
};
use remask::harness::corpus::{generate_corpus, CorpusSpec};
use remask::harness::{dataset, evaluate, AttackConfig, AttackKind as HarnessAttackKind};
use remask::importance::write_distribution_csv;
use remask::model::{GradientCapableVictim, LabeledPair, VictimModel};
use remask::reconstruction::MaskedLm;

#[derive(Parser)]
#[command(name = "remask", version, about = "Masked-reconstruction adversarial text detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttackKindArg {
    Synonym,
    Char,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded toy corpus as JSONL ({"text", "label"} rows).
    GenCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 240)]
        size: usize,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Train the toy victim classifier on a labeled corpus.
    TrainToy {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 600)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        lr: f64,
    },
    /// Attack corpus sentences and write the successful pairs.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        kind: AttackKindArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        budget: usize,
        #[arg(long, default_value_t = 0.4)]
        max_fraction: f64,
    },
    /// Calibrate the detection threshold on half of a pair dataset.
    Calibrate {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one text and print the verdict.
    Detect {
        #[arg(long)]
        text: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        calib: PathBuf,
    },
    /// Evaluate the calibrated detector over a pair dataset.
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Posterior keyword analysis with a gamma sweep.
    AnalyzeOracle {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Sweep gamma over 0..=k (kept for compatibility; the sweep is
        /// always computed).
        #[arg(long, default_value_t = true)]
        gamma_sweep: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hist: Option<PathBuf>,
    },
    /// Serve the mock inference protocol over HTTP.
    ServeMock {
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
}

/// Owns whichever backend stack the run config selected.
enum Backends {
    Toy {
        victim: ToyVictimModel,
        mlm: ToyMaskedLm,
    },
    Remote {
        victim: RemoteVictim,
        mlm: RemoteMaskedLm,
    },
}

impl Backends {
    fn from_config(config: &RunConfig) -> anyhow::Result<Self> {
        match config.backend.kind {
            BackendKind::Toy => {
                let victim_path = config.backend.victim_path.as_ref().expect("validated");
                let corpus_path = config.backend.mlm_corpus.as_ref().expect("validated");
                let victim = ToyVictimModel::load_json(victim_path)
                    .with_context(|| format!("loading victim from {}", victim_path.display()))?;
                let corpus = dataset::read_corpus_jsonl(corpus_path)?;
                let sentences: Vec<Vec<String>> = corpus
                    .iter()
                    .map(|lt| lt.text.split_whitespace().map(str::to_string).collect())
                    .collect();
                let mlm =
                    ToyMaskedLm::fit(sentences, remask::backends::toy_mlm::DEFAULT_SMOOTHING);
                Ok(Backends::Toy { victim, mlm })
            }
            BackendKind::Remote => {
                let url = config.backend.url.as_ref().expect("validated");
                let remote_config = RemoteBackendConfig {
                    timeout: std::time::Duration::from_secs(config.backend.timeout_secs),
                    max_in_flight: config.backend.max_in_flight,
                    retries: config.backend.retries,
                    auth_token: config.backend.auth_token.clone(),
                    ..RemoteBackendConfig::new(url.clone())
                };
                let client = if config.backend.cache {
                    RemoteClient::with_cache(
                        remote_config,
                        Arc::new(ResponseCache::new(config.backend.cache_capacity)),
                    )?
                } else {
                    RemoteClient::new(remote_config)?
                };
                let client = Arc::new(client);
                Ok(Backends::Remote {
                    victim: RemoteVictim::new(Arc::clone(&client)),
                    mlm: RemoteMaskedLm::new(client),
                })
            }
        }
    }

    fn victim(&self) -> &dyn VictimModel {
        match self {
            Backends::Toy { victim, .. } => victim,
            Backends::Remote { victim, .. } => victim,
        }
    }

    fn mlm(&self) -> &dyn MaskedLm {
        match self {
            Backends::Toy { mlm, .. } => mlm,
            Backends::Remote { mlm, .. } => mlm,
        }
    }

    fn gradients(&self) -> &dyn GradientCapableVictim {
        match self {
            Backends::Toy { victim, .. } => victim,
            Backends::Remote { victim, .. } => victim,
        }
    }
}

fn detector_scores(
    config: &DetectorConfig,
    pairs: &[LabeledPair],
    backends: &Backends,
) -> anyhow::Result<Vec<(f64, bool)>> {
    let detector = Detector::new(config.clone(), backends.victim(), backends.mlm())?
        .with_gradients(backends.gradients());
    let mut scored = Vec::with_capacity(pairs.len() * 2);
    for pair in pairs {
        scored.push((detector.score(&pair.normal)?.score.value, false));
        scored.push((detector.score(&pair.adversarial)?.score.value, true));
    }
    Ok(scored)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenCorpus { out, size, seed } => {
            let corpus = generate_corpus(&CorpusSpec::new(size, seed));
            dataset::write_corpus_jsonl(&out, &corpus)?;
            println!("wrote {} sentences to {}", corpus.len(), out.display());
        }
        Command::TrainToy {
            corpus,
            out,
            seed,
            dim,
            epochs,
            lr,
        } => {
            let rows: Vec<(String, usize)> = dataset::read_corpus_jsonl(&corpus)?
                .into_iter()
                .map(|lt| (lt.text, lt.label))
                .collect();
            let train_config = ToyVictimTrainConfig {
                dim,
                epochs,
                lr,
                seed,
                ..Default::default()
            };
            let model = ToyVictimModel::train(&rows, &train_config)?;
            let accuracy = model.accuracy(&rows)?;
            model.save_json(&out)?;
            println!(
                "trained victim on {} rows (accuracy {:.3}), saved to {}",
                rows.len(),
                accuracy,
                out.display()
            );
        }
        Command::Attack {
            model,
            kind,
            input,
            out,
            seed,
            budget,
            max_fraction,
        } => {
            let victim = ToyVictimModel::load_json(&model)?;
            let corpus = dataset::read_corpus_jsonl(&input)?;
            let base = match kind {
                AttackKindArg::Synonym => AttackConfig::synonym(
                    remask::harness::default_synonym_table(),
                    seed,
                ),
                AttackKindArg::Char => AttackConfig::char_level(seed),
            };
            let base = AttackConfig {
                budget,
                max_perturb_fraction: max_fraction,
                ..base
            };
            let mut pairs = Vec::new();
            let mut attempted = 0usize;
            for (i, lt) in corpus.iter().enumerate() {
                let text = remask::text::tokenize(&lt.text)?;
                let cfg = AttackConfig {
                    seed: base.seed.wrapping_add(i as u64),
                    ..base.clone()
                };
                attempted += 1;
                if let Some(pair) = remask::harness::run_attack(&victim, &text, &cfg)?.pair() {
                    pairs.push(pair.clone());
                }
            }
            if pairs.is_empty() {
                bail!("no successful attacks out of {attempted} sentences");
            }
            dataset::write_pairs_jsonl(&out, &dataset::pair_records(&pairs))?;
            println!(
                "attack {}: {}/{} sentences flipped, pairs written to {}",
                match base.kind {
                    HarnessAttackKind::SynonymSwap => "synonym",
                    HarnessAttackKind::CharPerturb => "char",
                },
                pairs.len(),
                attempted,
                out.display()
            );
        }
        Command::Calibrate { pairs, config, out } => {
            let run_config = load_run_config(&config)?;
            let backends = Backends::from_config(&run_config)?;
            let detector_config = run_config.detector.to_detector_config();
            let all_pairs = dataset::load_pairs_verified(&pairs, backends.victim())?;

            let split_seed = run_config.seed.value;
            let (calibration_indices, _) =
                dataset::split_pair_indices(all_pairs.len(), split_seed);
            let calibration_pairs: Vec<LabeledPair> = calibration_indices
                .iter()
                .map(|&i| all_pairs[i].clone())
                .collect();

            let scored = detector_scores(&detector_config, &calibration_pairs, &backends)?;
            let calibration = calibrate_threshold(&scored)?;
            let artifact = CalibrationArtifact {
                tau: calibration.tau,
                r: detector_config.rate,
                k: detector_config.k,
                strategy: detector_config.strategy,
                f1_at_tau: calibration.f1,
                score_histogram: histogram(&scored, 20),
                degenerate: calibration.degenerate,
                split_seed,
                pairs_digest: dataset::file_digest(&pairs)?,
                calibration_pair_indices: calibration_indices,
            };
            artifact.save_json(&out)?;
            println!(
                "calibrated tau {:.6} (F1 {:.3} on {} calibration pairs), saved to {}",
                artifact.tau,
                artifact.f1_at_tau,
                calibration_pairs.len(),
                out.display()
            );
        }
        Command::Detect { text, config, calib } => {
            let run_config = load_run_config(&config)?;
            let backends = Backends::from_config(&run_config)?;
            let artifact = CalibrationArtifact::load_json(&calib)?;
            let detector_config = run_config
                .detector
                .to_detector_config()
                .with_tau(artifact.tau);
            let detector =
                Detector::new(detector_config, backends.victim(), backends.mlm())?
                    .with_gradients(backends.gradients());
            let input = remask::text::tokenize(&text)?;
            let verdict = detector.detect(&input)?;
            println!(
                "verdict: {}",
                if verdict.adversarial { "adversarial" } else { "normal" }
            );
            println!(
                "score: {:.6} ({} flips / {} slots)",
                verdict.score.value, verdict.score.flips, verdict.score.denominator
            );
            println!("tau: {:.6}", verdict.tau);
            println!("strategy: {}", verdict.strategy_used);
        }
        Command::Eval {
            pairs,
            config,
            calib,
            report,
            hist,
        } => {
            let run_config = load_run_config(&config)?;
            let backends = Backends::from_config(&run_config)?;
            let artifact = CalibrationArtifact::load_json(&calib)?;
            let detector_config = run_config
                .detector
                .to_detector_config()
                .with_tau(artifact.tau);

            let all_pairs = dataset::load_pairs_verified(&pairs, backends.victim())?;
            // When evaluating the same file the calibration ran on, hold
            // out the complement of the calibration half.
            let digest = dataset::file_digest(&pairs)?;
            let eval_pairs: Vec<LabeledPair> = if digest == artifact.pairs_digest {
                let calibration: std::collections::BTreeSet<usize> =
                    artifact.calibration_pair_indices.iter().copied().collect();
                all_pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !calibration.contains(i))
                    .map(|(_, p)| p.clone())
                    .collect()
            } else {
                all_pairs
            };
            if eval_pairs.is_empty() {
                bail!("no evaluation pairs left after removing the calibration half");
            }

            let eval_report = evaluate(
                &detector_config,
                &eval_pairs,
                backends.victim(),
                backends.mlm(),
                Some(backends.gradients()),
            )?;
            eval_report.save_json(&report)?;
            if let Some(hist_path) = hist {
                let file = std::fs::File::create(&hist_path)?;
                remask::harness::eval::write_score_csv(
                    &eval_report,
                    std::io::BufWriter::new(file),
                )?;
            }
            println!(
                "evaluated {} examples: accuracy {:.3}, F1 {:.3}{}, AUC {:.3}{}",
                eval_report.per_example.len(),
                eval_report.accuracy,
                eval_report.f1,
                if eval_report.f1_defined { "" } else { " (undefined)" },
                eval_report.auc,
                if eval_report.auc_defined { "" } else { " (undefined)" },
            );
            println!(
                "calls: {} mask fills, {} candidate texts, {} gradient passes",
                eval_report.calls.mlm_fills,
                eval_report.calls.victim_candidate_texts,
                eval_report.calls.gradient_passes
            );
        }
        Command::AnalyzeOracle {
            pairs,
            config,
            gamma_sweep: _,
            out,
            hist,
        } => {
            let run_config = load_run_config(&config)?;
            let backends = Backends::from_config(&run_config)?;
            let detector_config = run_config.detector.to_detector_config();
            let all_pairs = dataset::load_pairs_verified(&pairs, backends.victim())?;
            let analysis = remask::importance::analyze(
                &all_pairs,
                backends.gradients(),
                backends.mlm(),
                &detector_config,
            )?;
            analysis.save_json(&out)?;
            if let Some(hist_path) = hist {
                let file = std::fs::File::create(&hist_path)?;
                write_distribution_csv(&analysis, std::io::BufWriter::new(file))?;
            }
            for row in &analysis.rows {
                println!(
                    "gamma={} non-keyword proportion {:.3} (normal {:.3}, adversarial {:.3}), overlap {:.3}",
                    row.gamma,
                    row.proportion.final_min,
                    row.proportion.normal,
                    row.proportion.adversarial,
                    row.overlap.final_min
                );
            }
            println!("analysis written to {}", out.display());
        }
        Command::ServeMock { port } => {
            let state = MockState::with_default_models()?;
            serve_blocking(port, state, |addr| {
                use std::io::Write;
                println!("listening on http://{addr}");
                // Tests read this line from a pipe; force it out now.
                let _ = std::io::stdout().flush();
            })?;
        }
    }
    Ok(())
}

fn exit_code_for(error: &anyhow::Error) -> i32 {
    match error.downcast_ref::<remask::Error>() {
        Some(remask::Error::Backend(_)) => 3,
        _ => 2,
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error:#}");
        std::process::exit(exit_code_for(&error));
    }
}
