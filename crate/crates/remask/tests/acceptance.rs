//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values. Run with `--nocapture` to see them.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use remask::backends::{
    CountingMaskedLm, CountingVictim, RestoringMaskedLm, ToyMaskedLm, ToyVictimModel,
    ToyVictimTrainConfig,
};
use remask::detection::{
    calibrate_threshold, evaluate_candidates, f1_counts, f1_from_counts, Detector,
    DetectorConfig,
};
use remask::harness::corpus::{
    as_sentences, as_training_rows, generate_corpus, CorpusSpec,
};
use remask::harness::{auc, build_pairs, default_synonym_table, evaluate, AttackConfig};
use remask::importance::{analyze, importance_scores};
use remask::masking::{mask_one_by_one, scaled_ceil, select_keywords, MaskStrategy};
use remask::model::{predict, LabeledPair, VictimModel};
use remask::reconstruction::reconstruct_all;
use remask::text::{tokenize, TokenizedText};

struct Fixture {
    victim: ToyVictimModel,
    mlm: ToyMaskedLm,
    pairs: Vec<LabeledPair>,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let corpus = generate_corpus(&CorpusSpec::default());
        let victim = ToyVictimModel::train(
            &as_training_rows(&corpus),
            &ToyVictimTrainConfig::default(),
        )
        .expect("victim training");
        let mlm = ToyMaskedLm::fit(
            as_sentences(&corpus),
            remask::backends::toy_mlm::DEFAULT_SMOOTHING,
        );
        // 200-pair synthetic suite, synonym and char attacks mixed equally.
        let attack_corpus = generate_corpus(&CorpusSpec::new(260, 900));
        let syn = AttackConfig::synonym(default_synonym_table(), 101);
        let chr = AttackConfig::char_level(202);
        let pairs = build_pairs(&victim, &attack_corpus, &syn, &chr, 200).expect("attacks");
        assert!(pairs.len() >= 200, "only {} pairs", pairs.len());
        Fixture { victim, mlm, pairs }
    })
}

fn pass(n: u32, detail: &str) {
    println!("PASS criterion {n}: {detail}");
}

fn scores_for(
    config: &DetectorConfig,
    pairs: &[LabeledPair],
    victim: &ToyVictimModel,
    mlm: &ToyMaskedLm,
) -> Vec<(f64, bool)> {
    let detector = Detector::new(config.clone(), victim, mlm)
        .unwrap()
        .with_gradients(victim);
    pairs
        .iter()
        .flat_map(|p| {
            vec![
                (detector.score(&p.normal).unwrap().score.value, false),
                (detector.score(&p.adversarial).unwrap().score.value, true),
            ]
        })
        .collect()
}

/// Criterion 1: for every toy instance with n <= 8 and k <= 3, the pipeline
/// score equals an independent brute-force enumeration of all masked
/// candidates, as an exact rational (integer) comparison, within 5 s.
#[test]
fn acceptance_01_score_matches_brute_force_enumeration() {
    let started = Instant::now();
    let fx = fixture();
    let sentences = [
        "the day was truly superb indeed",
        "a night so utterly dismal alas",
        "quite warm overall rather cold somehow",
        "plus messy too rather bright somehow",
        "our visit seemed truly glorious",
        "that show was utterly wretched",
        "fairly plain anyway in the end",
        "the trip felt quite dreary overall",
    ];
    let mut checked = 0;
    for raw in sentences {
        let text = tokenize(raw).unwrap();
        assert!(text.len() <= 8);
        for k in 1..=3usize {
            for rate in [0.3, 0.6, 1.0] {
                // Pipeline route.
                let reference = predict(&fx.victim, &text).unwrap();
                let profile = importance_scores(&fx.victim, &text).unwrap();
                let selection = select_keywords(&text, &profile.scores, rate).unwrap();
                let plan = if rate == 1.0 {
                    mask_one_by_one(&text, "[MASK]")
                } else {
                    remask::masking::mask_selected(&text, &selection, rate, "[MASK]").unwrap()
                };
                let recon = reconstruct_all(&fx.mlm, &plan, k).unwrap();
                let (score, _) = remask::detection::score_against(
                    &reference,
                    &recon,
                    &fx.victim,
                    false,
                )
                .unwrap();

                // Independent enumeration: re-derive the masked positions
                // with a hand-rolled selection, query the backend directly,
                // classify candidates one at a time, count disagreements.
                let n = text.len();
                let mut positions: Vec<usize> = if rate == 1.0 {
                    (0..n).collect()
                } else {
                    let mut order: Vec<usize> = (0..n).collect();
                    // Insertion sort by (importance, index) as a second
                    // opinion on the stable ascending sort.
                    for i in 1..order.len() {
                        let mut j = i;
                        while j > 0
                            && profile.scores[order[j - 1]] > profile.scores[order[j]]
                        {
                            order.swap(j - 1, j);
                            j -= 1;
                        }
                    }
                    let keep = scaled_ceil(rate, n);
                    order[n - keep..].to_vec()
                };
                positions.sort_unstable();

                let mut flips = 0u32;
                let mut terms = 0u32;
                for &pos in &positions {
                    let mut rendered: Vec<String> = text.words().to_vec();
                    rendered[pos] = "[MASK]".to_string();
                    let candidates = remask::reconstruction::MaskedLm::fill(
                        &fx.mlm, &rendered, pos, k,
                    )
                    .unwrap();
                    for cand in candidates.iter().take(k) {
                        terms += 1;
                        let rebuilt = text.with_word_replaced(pos, &cand.word);
                        let pred = predict(&fx.victim, &rebuilt).unwrap();
                        if pred.label != reference.label {
                            flips += 1;
                        }
                    }
                }

                // Exact rational equality: same flip count over the same
                // denominator.
                assert_eq!(score.flips, flips, "{raw} k={k} r={rate}");
                assert_eq!(score.denominator, (n * k) as u32);
                assert_eq!(score.terms, terms, "{raw} k={k} r={rate}");
                checked += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    pass(1, &format!("{checked} instances match brute force exactly in {elapsed:?}"));
}

/// Criterion 2: with the restoring masked-LM stub, the flip score is
/// exactly zero on 100% of 1,000 fuzzed inputs.
#[test]
fn acceptance_02_perfect_restoration_scores_zero() {
    let fx = fixture();
    let vocab: Vec<&str> = [
        "the", "day", "was", "truly", "superb", "indeed", "quite", "warm", "overall",
        "plus", "bright", "too", "rather", "cold", "somehow", "utterly", "dismal",
        "alas", "plain", "zzyx", "qwrt", "blorp",
    ]
    .into();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut zeros = 0usize;
    let total = 1000;
    for _ in 0..total {
        let n = rng.random_range(1..=12usize);
        let words: Vec<&str> = (0..n)
            .map(|_| vocab[rng.random_range(0..vocab.len())])
            .collect();
        let text = tokenize(&words.join(" ")).unwrap();
        let stub = RestoringMaskedLm::for_text(&text);
        let plan = mask_one_by_one(&text, "[MASK]");
        let recon = reconstruct_all(&stub, &plan, 3).unwrap();
        let score = remask::detection::flip_score(&text, &recon, &fx.victim).unwrap();
        if score.flips == 0 && score.value == 0.0 {
            zeros += 1;
        }
    }
    assert_eq!(zeros, total);
    pass(2, &format!("flip score exactly 0 on {zeros}/{total} fuzzed inputs"));
}

/// Criterion 3: analytic gradients match central finite differences with
/// max relative error <= 1e-4 over 100 random (model, sentence) draws.
#[test]
fn acceptance_03_gradients_match_finite_differences() {
    let corpus = generate_corpus(&CorpusSpec::default());
    let rows = as_training_rows(&corpus);
    let vocab: Vec<&str> = vec![
        "the", "day", "truly", "superb", "indeed", "quite", "warm", "overall", "cold",
        "dismal", "plain", "visit", "measure", "end",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for draw in 0..100 {
        // Alternate seeded random initializations and lightly trained
        // models so both regimes are covered.
        let cfg = ToyVictimTrainConfig {
            seed: 1000 + draw,
            epochs: if draw % 2 == 0 { 0 } else { 5 },
            dim: 8,
            ..Default::default()
        };
        let model = ToyVictimModel::train(&rows, &cfg).unwrap();
        // Distinct words only: slot gradients are checked one row at a time.
        let mut picks = vocab.clone();
        for i in (1..picks.len()).rev() {
            picks.swap(i, rng.random_range(0..=i));
        }
        let n = rng.random_range(2..=6usize);
        let text = tokenize(&picks[..n].join(" ")).unwrap();
        let target = rng.random_range(1..=2usize);
        let err =
            remask::backends::gradcheck::max_relative_error(&model, &text, target, 1e-5)
                .unwrap();
        worst = worst.max(err);
    }
    assert!(worst <= 1e-4, "max relative error {worst}");
    pass(3, &format!("max relative error {worst:.2e} over 100 draws"));
}

/// Criterion 4: the non-keyword proportion is non-decreasing in gamma and
/// equals exactly 1.0 at gamma = k, for k in {1, 2, 3}.
#[test]
fn acceptance_04_gamma_sweep_shape() {
    let fx = fixture();
    for k in 1..=3usize {
        let config = DetectorConfig {
            k,
            gamma: k.min(1),
            ..DetectorConfig::gradient_guided()
        };
        let report = analyze(&fx.pairs[..16], &fx.victim, &fx.mlm, &config).unwrap();
        let mut last = -1.0;
        for row in &report.rows {
            assert!(
                row.proportion.final_min >= last,
                "k={k} gamma={} proportion decreased",
                row.gamma
            );
            last = row.proportion.final_min;
        }
        let final_row = report.rows.last().unwrap();
        assert_eq!(final_row.gamma, k);
        assert_eq!(final_row.proportion.normal, 1.0);
        assert_eq!(final_row.proportion.adversarial, 1.0);
        assert_eq!(final_row.proportion.final_min, 1.0);
    }
    pass(4, "proportion monotone in gamma and exactly 1.0 at gamma = k for k in {1,2,3}");
}

/// Criterion 5: the gradient-guided score equals the keyword-restricted
/// one-by-one sum exactly on every instance, and verdicts agree on at
/// least 95% of the 200-pair suite.
#[test]
fn acceptance_05_gradient_guided_matches_restricted_scan() {
    let fx = fixture();
    let config = DetectorConfig::gradient_guided();
    let detector = Detector::new(config.clone(), &fx.victim, &fx.mlm)
        .unwrap()
        .with_gradients(&fx.victim);

    // Exact-equality check on a slice of instances.
    for pair in fx.pairs.iter().take(25) {
        for text in [&pair.normal, &pair.adversarial] {
            let guided = detector.score(text).unwrap();
            let reference = predict(&fx.victim, text).unwrap();
            let profile = importance_scores(&fx.victim, text).unwrap();
            let selection = select_keywords(text, &profile.scores, config.rate).unwrap();
            let plan = mask_one_by_one(text, &config.mask_token);
            let recon = reconstruct_all(&fx.mlm, &plan, config.k).unwrap();
            let outcomes = evaluate_candidates(&reference, &recon, &fx.victim).unwrap();
            let restricted = outcomes
                .iter()
                .filter(|o| o.flipped && selection.keywords.contains(&o.word_index))
                .count() as u32;
            assert_eq!(guided.score.flips, restricted);
            assert_eq!(guided.score.denominator, (text.len() * config.k) as u32);
        }
    }

    // Verdict agreement over the full suite, thresholds calibrated per
    // strategy on a disjoint prefix.
    let (cal, hold) = fx.pairs.split_at(100);
    let base_config = DetectorConfig::one_by_one();
    let base_tau = calibrate_threshold(&scores_for(&base_config, cal, &fx.victim, &fx.mlm))
        .unwrap()
        .tau;
    let grad_tau = calibrate_threshold(&scores_for(&config, cal, &fx.victim, &fx.mlm))
        .unwrap()
        .tau;
    let base_scores = scores_for(&base_config, hold, &fx.victim, &fx.mlm);
    let grad_scores = scores_for(&config, hold, &fx.victim, &fx.mlm);
    let agree = base_scores
        .iter()
        .zip(&grad_scores)
        .filter(|((b, _), (g, _))| (*b > base_tau) == (*g > grad_tau))
        .count() as f64
        / base_scores.len() as f64;
    assert!(agree >= 0.95, "verdict agreement {agree}");
    pass(
        5,
        &format!("restricted-sum equality exact; verdict agreement {agree:.3} >= 0.95"),
    );
}

/// Criterion 6: the calibrated threshold achieves F1 equal to an
/// exhaustive scan over all candidate thresholds, for 50 random score
/// configurations.
#[test]
fn acceptance_06_threshold_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..50 {
        // Discrete score grid induces plenty of ties.
        let n = rng.random_range(4..40usize);
        let mut scored: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                (
                    rng.random_range(0..12u32) as f64 / 12.0,
                    rng.random_bool(0.5),
                )
            })
            .collect();
        // Force both labels present.
        scored[0].1 = false;
        scored[1].1 = true;

        let calibration = calibrate_threshold(&scored).unwrap();

        // Oracle: exhaustive scan over midpoints and endpoints with an
        // independent F1 computation.
        let mut values: Vec<f64> = scored.iter().map(|&(s, _)| s).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut candidates: Vec<f64> =
            values.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        candidates.push(0.0);
        candidates.push(1.0);
        let mut best: (u32, u32, u32) = (0, 0, u32::MAX);
        let mut best_f1 = -1.0f64;
        for tau in candidates {
            let (tp, fp, fnn) = f1_counts(&scored, tau);
            let f1 = f1_from_counts(tp, fp, fnn);
            if f1 > best_f1 {
                best_f1 = f1;
                best = (tp, fp, fnn);
            }
        }

        // Exact rational equality of the two F1 values:
        // 2a/(2a+b) == 2c/(2c+d) iff a*(2c+d) == c*(2a+b).
        let (tp_a, fp_a, fn_a) = (
            calibration.true_positives,
            calibration.false_positives,
            calibration.false_negatives,
        );
        let (tp_b, fp_b, fn_b) = best;
        let lhs = tp_a as u64 * (2 * tp_b + fp_b + fn_b) as u64;
        let rhs = tp_b as u64 * (2 * tp_a + fp_a + fn_a) as u64;
        assert_eq!(lhs, rhs, "case {case}: F1 {} vs oracle {best_f1}", calibration.f1);
    }
    pass(6, "calibrated F1 equals exhaustive-scan F1 on 50 random configurations");
}

/// Criterion 7: on a seeded 100/100 suite (synonym and char attacks mixed
/// equally) the threshold detector reaches F1 >= 0.85 and AUC >= 0.90
/// within 60 seconds.
#[test]
fn acceptance_07_end_to_end_detection() {
    let fx = fixture();
    let started = Instant::now();

    // Calibrate on the first 100 pairs, evaluate on the held-out 100.
    let (cal, hold) = fx.pairs.split_at(100);
    assert_eq!(hold.len(), 100);
    let config = DetectorConfig::one_by_one();
    let calibration =
        calibrate_threshold(&scores_for(&config, cal, &fx.victim, &fx.mlm)).unwrap();
    let config = config.with_tau(calibration.tau);
    let report = evaluate(&config, hold, &fx.victim, &fx.mlm, None).unwrap();

    let elapsed = started.elapsed();
    assert_eq!(report.per_example.len(), 200);
    assert!(report.f1 >= 0.85, "F1 {}", report.f1);
    assert!(report.auc >= 0.90, "AUC {}", report.auc);
    assert!(elapsed.as_secs() <= 60, "took {elapsed:?}");
    let mixing: Vec<String> = report
        .origin_counts
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect();
    assert_eq!(report.origin_counts["synonym"], report.origin_counts["char"]);
    pass(
        7,
        &format!(
            "F1 {:.3} AUC {:.3} in {elapsed:?} ({})",
            report.f1,
            report.auc,
            mixing.join(" ")
        ),
    );
}

/// Criterion 8: per example, one-by-one masking issues exactly n fill
/// calls and n*k candidate classifications; gradient-guided issues exactly
/// ceil(0.3 n) and ceil(0.3 n)*k.
#[test]
fn acceptance_08_cost_accounting() {
    let fx = fixture();
    let sample = &fx.pairs[..10];
    for pair in sample {
        for text in [&pair.normal, &pair.adversarial] {
            let n = text.len() as u64;
            let k = 3u64;

            let counting_victim = CountingVictim::new(&fx.victim);
            let counting_mlm = CountingMaskedLm::new(&fx.mlm);
            let base = Detector::new(
                DetectorConfig::one_by_one().with_tau(0.02),
                &counting_victim,
                &counting_mlm,
            )
            .unwrap();
            let verdict = base.detect(text).unwrap();
            assert_eq!(counting_mlm.fills(), n);
            assert_eq!(verdict.calls.mlm_fills, n);
            assert_eq!(verdict.calls.victim_candidate_texts, n * k);
            // Wrapper counts the candidates plus the single reference text.
            assert_eq!(counting_victim.texts_classified(), n * k + 1);

            let counting_victim = CountingVictim::new(&fx.victim);
            let counting_mlm = CountingMaskedLm::new(&fx.mlm);
            let guided = Detector::new(
                DetectorConfig::gradient_guided().with_tau(0.01),
                &counting_victim,
                &counting_mlm,
            )
            .unwrap()
            .with_gradients(&fx.victim);
            let verdict = guided.detect(text).unwrap();
            let masked = scaled_ceil(0.3, text.len()) as u64;
            assert_eq!(counting_mlm.fills(), masked);
            assert_eq!(verdict.calls.mlm_fills, masked);
            assert_eq!(verdict.calls.victim_candidate_texts, masked * k);
            assert_eq!(verdict.calls.gradient_passes, 1);
        }
    }
    pass(
        8,
        "one-by-one: n fills, n*k candidate texts; gradient-guided: ceil(0.3n) and ceil(0.3n)*k",
    );
}

/// Criterion 9: a k-sweep over {1, 3, 5, 10} reports F1 per k, with k=1
/// within 0.05 F1 of k=3.
#[test]
fn acceptance_09_k_sweep() {
    let fx = fixture();
    let (cal, hold) = fx.pairs.split_at(100);
    let mut f1_by_k = std::collections::BTreeMap::new();
    for k in [1usize, 3, 5, 10] {
        let config = DetectorConfig::one_by_one().with_k(k);
        let calibration =
            calibrate_threshold(&scores_for(&config, cal, &fx.victim, &fx.mlm)).unwrap();
        let config = config.with_tau(calibration.tau);
        let report = evaluate(&config, hold, &fx.victim, &fx.mlm, None).unwrap();
        println!("  k-sweep: k={k} F1={:.3} AUC={:.3}", report.f1, report.auc);
        f1_by_k.insert(k, report.f1);
    }
    let gap = (f1_by_k[&1] - f1_by_k[&3]).abs();
    assert!(gap <= 0.05, "F1(k=1) {} vs F1(k=3) {}", f1_by_k[&1], f1_by_k[&3]);
    pass(
        9,
        &format!(
            "F1 per k: {:?}; |F1(1)-F1(3)| = {gap:.3} <= 0.05",
            f1_by_k
        ),
    );
}

/// Criterion 10: mock-server round-trips validate bit-exactly for all
/// three endpoints, and cache-on vs cache-off pipelines produce identical
/// reports.
#[test]
fn acceptance_10_protocol_conformance() {
    use remask::backends::mock::{spawn, MockState};
    use remask::backends::remote::{
        RemoteBackendConfig, RemoteClient, RemoteMaskedLm, RemoteVictim,
    };
    use remask::backends::ResponseCache;
    use std::sync::Arc;

    let fx = fixture();
    let server = spawn(MockState::new(fx.victim.clone(), fx.mlm.clone())).unwrap();

    // Bit-exact responses: identical requests return identical bytes, and
    // the parsed payloads satisfy every schema constraint.
    let http = reqwest::blocking::Client::new();
    let requests = [
        (
            "/v1/classify",
            r#"{"texts":["the day was truly superb indeed"]}"#,
        ),
        (
            "/v1/fill_mask",
            r#"{"words":["truly","[MASK]","indeed"],"mask_index":2,"top_k":3}"#,
        ),
        (
            "/v1/gradients",
            r#"{"words":["the","day","was","truly","superb","indeed"],"target_label":1}"#,
        ),
    ];
    for (endpoint, body) in requests {
        let url = format!("{}{}", server.base_url(), endpoint);
        let send = || {
            http.post(&url)
                .header("content-type", "application/json")
                .body(body)
                .send()
                .unwrap()
                .bytes()
                .unwrap()
                .to_vec()
        };
        let first = send();
        let second = send();
        assert_eq!(first, second, "{endpoint} responses differ between calls");
        match endpoint {
            "/v1/classify" => {
                let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
                let rows = parsed["probs"].as_array().unwrap();
                for row in rows {
                    let sum: f64 = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
                    assert!((sum - 1.0).abs() <= 1e-6);
                }
            }
            "/v1/fill_mask" => {
                let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
                let candidates = parsed["candidates"].as_array().unwrap();
                assert!(!candidates.is_empty() && candidates.len() <= 3);
                let scores: Vec<f64> = candidates
                    .iter()
                    .map(|c| c["score"].as_f64().unwrap())
                    .collect();
                for pair in scores.windows(2) {
                    assert!(pair[0] >= pair[1], "scores increase");
                }
            }
            _ => {
                let parsed: serde_json::Value = serde_json::from_slice(&first).unwrap();
                assert_eq!(parsed["word_grad_norms"].as_array().unwrap().len(), 6);
                assert!(parsed["loss"].as_f64().unwrap().is_finite());
            }
        }
    }

    // Cache-on vs cache-off pipelines produce identical reports.
    let suite = &fx.pairs[..6];
    let config = DetectorConfig::one_by_one().with_tau(0.02);
    let run = |cache: Option<Arc<ResponseCache>>| {
        let cfg = RemoteBackendConfig::new(server.base_url());
        let client = Arc::new(match cache {
            Some(c) => RemoteClient::with_cache(cfg, c).unwrap(),
            None => RemoteClient::new(cfg).unwrap(),
        });
        let victim = RemoteVictim::new(Arc::clone(&client));
        let mlm = RemoteMaskedLm::new(Arc::clone(&client));
        evaluate(&config, suite, &victim, &mlm, None).unwrap()
    };
    let cache = Arc::new(ResponseCache::new(8192));
    let without = run(None);
    let warmup = run(Some(Arc::clone(&cache)));
    // Second cached run is served almost entirely from replayed bytes.
    let with = run(Some(Arc::clone(&cache)));
    assert!(cache.hits() > 0, "second run should hit the cache");
    assert_eq!(warmup.f1, with.f1);
    assert_eq!(without.f1, with.f1);
    assert_eq!(without.auc, with.auc);
    assert_eq!(without.confusion, with.confusion);
    let scores_without: Vec<f64> = without.per_example.iter().map(|e| e.score).collect();
    let scores_with: Vec<f64> = with.per_example.iter().map(|e| e.score).collect();
    assert_eq!(scores_without, scores_with);
    pass(
        10,
        &format!(
            "bit-exact round-trips on 3 endpoints; cache on/off reports identical (hits {})",
            cache.hits()
        ),
    );
}
