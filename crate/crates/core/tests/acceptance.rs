//! Acceptance suite: one test per criterion, each checking its stated
//! tolerance and printing a summary line. Oracles come from
//! `enteval::oracles` and stay independent of the code paths they check.

use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use enteval::grpo::{
    group_advantages, kl_estimate, train_toy_grpo, GrpoConfig, SyntheticQaEnv, ToyPolicy,
    TrainMode, TrainOptions, DEFAULT_TOY_FEATURE_DIM, DEFAULT_TOY_FORMAT_BIAS,
    DEFAULT_TOY_POOL_SIZE, DEFAULT_TOY_TEMPERATURE,
};
use enteval::metrics::{plcc, srcc, PairedScores, PreferenceLabel, PreferencePair};
use enteval::oracles;
use enteval::parse::{parse_tagged, Strictness};
use enteval::qgen::Polarity;
use enteval::scoring::{
    dimension_score, entity_score, restricted_softmax, AnswerLogits, LogitKind, ScoreMode,
    TokenSets,
};
use enteval::selftest;

fn random_entries(rng: &mut ChaCha8Rng, sets: &TokenSets) -> Vec<(String, f64)> {
    loop {
        let mut entries = Vec::new();
        for token in sets.yes_tokens.iter().chain(&sets.no_tokens) {
            if rng.random::<f64>() < 0.7 {
                entries.push((token.clone(), rng.random::<f64>() * 40.0 - 20.0));
            }
        }
        if !entries.is_empty() {
            return entries;
        }
    }
}

fn dist_of(entries: &[(String, f64)], sets: &TokenSets) -> enteval::scoring::AnswerDistribution {
    restricted_softmax(
        &AnswerLogits::new(LogitKind::RawLogit, entries.to_vec()).unwrap(),
        sets,
    )
    .unwrap()
}

#[test]
fn criterion_01_softmax_oracle_equivalence() {
    let started = Instant::now();
    let sets = TokenSets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let entries = random_entries(&mut rng, &sets);
        let dist = dist_of(&entries, &sets);
        let (ref_yes, ref_no) = oracles::restricted_softmax_reference(&entries, &sets).unwrap();
        worst = worst
            .max((dist.p_yes - ref_yes).abs())
            .max((dist.p_no - ref_no).abs());
    }
    let elapsed = started.elapsed();
    assert!(worst <= 1e-12, "worst deviation {worst:.3e} > 1e-12");
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    println!(
        "criterion 01 PASS: softmax matches oracle on 1000 sets, worst |Δ| = {worst:.2e} in {elapsed:?}"
    );
}

#[test]
fn criterion_02_normalization_and_shift_invariance() {
    let sets = TokenSets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst_norm = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..10_000 {
        let entries = random_entries(&mut rng, &sets);
        let dist = dist_of(&entries, &sets);
        worst_norm = worst_norm.max((dist.p_yes + dist.p_no - 1.0).abs());
        let shift = rng.random::<f64>() * 20.0 - 10.0;
        let shifted: Vec<(String, f64)> = entries
            .iter()
            .map(|(t, v)| (t.clone(), v + shift))
            .collect();
        let dist_shifted = dist_of(&shifted, &sets);
        worst_shift = worst_shift
            .max((dist.p_yes - dist_shifted.p_yes).abs())
            .max((dist.p_no - dist_shifted.p_no).abs());
    }
    assert!(worst_norm <= 1e-9, "normalization off by {worst_norm:.3e}");
    assert!(worst_shift <= 1e-9, "shift variance {worst_shift:.3e}");
    println!(
        "criterion 02 PASS: 10000 inputs, p_yes+p_no-1 worst {worst_norm:.2e}, shift worst {worst_shift:.2e}"
    );
}

#[test]
fn criterion_03_polarity_duality_exact() {
    let sets = TokenSets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    for _ in 0..10_000 {
        let entries = random_entries(&mut rng, &sets);
        let dist = dist_of(&entries, &sets);
        let total =
            entity_score(&dist, Polarity::Positive) + entity_score(&dist, Polarity::Negative);
        assert_eq!(total, 1.0, "duality broke for {entries:?}");
    }
    println!(
        "criterion 03 PASS: entity_score(d,1) + entity_score(d,0) == 1 exactly on 10000 inputs"
    );
}

#[test]
fn criterion_04_mode_consistency_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    for _ in 0..10_000 {
        let n = 1 + (rng.random::<u64>() % 49) as usize;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let literal = dimension_score(&scores, ScoreMode::PaperLiteral).unwrap();
        let normalized = dimension_score(&scores, ScoreMode::Normalized).unwrap();
        assert_eq!(
            normalized,
            literal / n as f64,
            "mode consistency broke at n={n}"
        );
    }
    println!("criterion 04 PASS: normalized == paper_literal / count bitwise on 10000 vectors");
}

#[test]
fn criterion_05_gradient_check() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let grpo = selftest::random_grpo_instance(seed);
        let fd = oracles::central_difference(&mut |p| grpo.loss_at(p), grpo.policy.params(), 1e-6);
        worst = worst.max(oracles::gradient_relative_error(
            &grpo.analytic_gradient(),
            &fd,
        ));
        let sft = selftest::random_sft_instance(seed);
        let fd = oracles::central_difference(&mut |p| sft.loss_at(p), sft.policy.params(), 1e-6);
        worst = worst.max(oracles::gradient_relative_error(
            &sft.analytic_gradient(),
            &fd,
        ));
    }
    let elapsed = started.elapsed();
    assert!(worst <= 1e-5, "worst relative error {worst:.3e} > 1e-5");
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60s");
    println!(
        "criterion 05 PASS: 100 gradient checks (surrogate loss + cross-entropy), worst rel err {worst:.2e} in {elapsed:?}"
    );
}

#[test]
fn criterion_06_kl_estimator() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    for _ in 0..10_000 {
        let a = rng.random::<f64>() * -12.0;
        let b = rng.random::<f64>() * -12.0;
        let k = kl_estimate(a, b).unwrap();
        assert!(k >= 0.0, "kl_estimate({a}, {b}) = {k} < 0");
        if (a - b).abs() > 1e-9 {
            assert!(k > 0.0, "kl_estimate({a}, {b}) = 0 for unequal logprobs");
        }
        assert_eq!(kl_estimate(a, a).unwrap(), 0.0);
    }
    let k2 = kl_estimate(-2.5 + 2.0f64.ln(), -2.5).unwrap();
    let expected = 2.0 - 2.0f64.ln() - 1.0;
    assert!(
        (k2 - expected).abs() <= 1e-12,
        "r=2 case: {k2} vs {expected}"
    );
    println!(
        "criterion 06 PASS: KL non-negative on 10000 pairs, zero iff equal, r=2 Δ = {:.2e}",
        (k2 - expected).abs()
    );
}

#[test]
fn criterion_07_advantage_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let g = 16;
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for _ in 0..2000 {
        let rewards: Vec<f64> = loop {
            let r: Vec<f64> = (0..g).map(|_| (rng.random::<u64>() % 3) as f64).collect();
            if r.iter().any(|x| *x != r[0]) {
                break r;
            }
        };
        let adv = group_advantages(&rewards, g).unwrap();
        let mean = adv.iter().sum::<f64>() / g as f64;
        let std = (adv.iter().map(|a| a * a).sum::<f64>() / g as f64).sqrt();
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((std - 1.0).abs());
    }
    assert!(worst_mean <= 1e-9, "worst |mean| {worst_mean:.3e}");
    assert!(worst_std <= 1e-6, "worst |std-1| {worst_std:.3e}");
    let degenerate = group_advantages(&vec![2.0; g], g).unwrap();
    assert!(degenerate.iter().all(|a| *a == 0.0));
    println!(
        "criterion 07 PASS: 2000 groups of {g}, worst |mean| {worst_mean:.2e}, worst |std-1| {worst_std:.2e}, degenerate all-zero"
    );
}

#[test]
fn criterion_08_toy_grpo_convergence() {
    let started = Instant::now();
    let env = SyntheticQaEnv::new(7, DEFAULT_TOY_POOL_SIZE, DEFAULT_TOY_FEATURE_DIM);
    let cfg = GrpoConfig {
        seed: 42,
        ..GrpoConfig::default()
    };
    let opts = TrainOptions::default();
    let steps = 2000;
    let window = 100;

    let mut cold_policy = ToyPolicy::new_base(
        DEFAULT_TOY_FEATURE_DIM,
        DEFAULT_TOY_TEMPERATURE,
        DEFAULT_TOY_FORMAT_BIAS,
    );
    let cold = train_toy_grpo(
        &env,
        &mut cold_policy,
        &cfg,
        steps,
        TrainMode::ColdStart,
        &opts,
    )
    .expect("cold-start training runs");
    let cold_acc = cold.tail_mean(window, |p| p.acc_rate);
    let cold_fmt = cold.tail_mean(window, |p| p.fmt_rate);

    let mut zero_policy = ToyPolicy::new_base(
        DEFAULT_TOY_FEATURE_DIM,
        DEFAULT_TOY_TEMPERATURE,
        DEFAULT_TOY_FORMAT_BIAS,
    );
    let zero = train_toy_grpo(&env, &mut zero_policy, &cfg, steps, TrainMode::Zero, &opts)
        .expect("zero training runs");
    let zero_fmt = zero.tail_mean(window, |p| p.fmt_rate);
    let zero_acc = zero.tail_mean(window, |p| p.acc_rate);

    let elapsed = started.elapsed();
    assert!(
        cold_acc >= 0.95,
        "cold-start accuracy-reward rate {cold_acc:.4} < 0.95"
    );
    assert!(
        cold_fmt >= 0.99,
        "cold-start format-reward rate {cold_fmt:.4} < 0.99"
    );
    assert!(
        zero_fmt >= 0.99,
        "zero format-reward rate {zero_fmt:.4} < 0.99"
    );
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "took {elapsed:?}, budget 5 min"
    );
    println!(
        "criterion 08 PASS: within {steps} steps cold-start acc {cold_acc:.3} fmt {cold_fmt:.3}, zero acc {zero_acc:.3} fmt {zero_fmt:.3} in {elapsed:?}"
    );
}

#[test]
fn criterion_09_parser_corpus_and_monotonicity() {
    let cases = selftest::parser_corpus();
    assert_eq!(cases.len(), 40, "corpus must hold 40 cases");
    for case in &cases {
        if let Err(message) = selftest::check_parser_case(case) {
            panic!("parser corpus case failed: {message}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
    for _ in 0..10_000 {
        let soup = selftest::random_tag_soup(&mut rng);
        let strict = parse_tagged(&soup, Strictness::Strict);
        let lenient = parse_tagged(&soup, Strictness::Lenient);
        assert!(
            !strict.format_valid || lenient.format_valid,
            "strict-valid but lenient-invalid: {soup:?}"
        );
    }
    println!("criterion 09 PASS: 40-case corpus exact, strict => lenient on 10000 fuzzed strings");
}

#[test]
fn criterion_10_metrics_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 2 + (rng.random::<u64>() % 48) as usize;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let paired = PairedScores::new(
            x.iter()
                .zip(&y)
                .enumerate()
                .map(|(i, (a, b))| (format!("i{i}"), *a, *b))
                .collect(),
        )
        .unwrap();
        let s = srcc(&paired).unwrap();
        let s_ref = oracles::spearman_reference(&x, &y).unwrap();
        let p = plcc(&paired).unwrap();
        let p_ref = oracles::pearson_reference(&x, &y).unwrap();
        assert!((-1.0..=1.0).contains(&s) && (-1.0..=1.0).contains(&p));
        worst = worst.max((s - s_ref).abs()).max((p - p_ref).abs());
    }
    assert!(worst <= 1e-12, "worst oracle deviation {worst:.3e}");

    let fixture = PairedScores::new(vec![
        ("a".into(), 1.0, 3.0),
        ("b".into(), 2.0, 1.0),
        ("c".into(), 3.0, 2.0),
    ])
    .unwrap();
    assert_eq!(srcc(&fixture).unwrap(), -0.5);

    // Monotone invariance: ranks are unchanged by strictly increasing maps,
    // so srcc is bitwise identical.
    let mut worst_affine = 0.0f64;
    for _ in 0..200 {
        let n = 3 + (rng.random::<u64>() % 30) as usize;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let a = 0.1 + rng.random::<f64>() * 3.0;
        let b = 0.1 + rng.random::<f64>() * 2.0;
        let transformed: Vec<f64> = x.iter().map(|v| a * v + b * v.powi(3)).collect();
        let base = PairedScores::new(
            x.iter()
                .zip(&y)
                .enumerate()
                .map(|(i, (p, r))| (format!("i{i}"), *p, *r))
                .collect(),
        )
        .unwrap();
        let mapped = PairedScores::new(
            transformed
                .iter()
                .zip(&y)
                .enumerate()
                .map(|(i, (p, r))| (format!("i{i}"), *p, *r))
                .collect(),
        )
        .unwrap();
        assert_eq!(
            srcc(&base).unwrap(),
            srcc(&mapped).unwrap(),
            "srcc not invariant under monotone transform"
        );
        // Affine invariance of plcc (positive slope).
        let shifted: Vec<f64> = x.iter().map(|v| a * v + 0.7).collect();
        let affine = PairedScores::new(
            shifted
                .iter()
                .zip(&y)
                .enumerate()
                .map(|(i, (p, r))| (format!("i{i}"), *p, *r))
                .collect(),
        )
        .unwrap();
        worst_affine = worst_affine.max((plcc(&base).unwrap() - plcc(&affine).unwrap()).abs());
    }
    assert!(
        worst_affine <= 1e-9,
        "affine invariance off by {worst_affine:.3e}"
    );

    // diff concentrates near chance on label-balanced random data.
    let mut pairs = Vec::new();
    for i in 0..2000 {
        pairs.push(PreferencePair {
            pair_id: format!("p{i}"),
            score_a: rng.random::<f64>(),
            score_b: rng.random::<f64>(),
            human_label: if i % 2 == 0 {
                PreferenceLabel::Win
            } else {
                PreferenceLabel::Lose
            },
        });
    }
    let td = enteval::metrics::pairwise_tau_diff(&pairs, &[0.0]).unwrap();
    let diff = td.diff.unwrap();
    assert!(
        (diff - 0.5).abs() <= 0.1,
        "diff on balanced random data = {diff}, expected ~0.5"
    );
    assert!((0.0..=1.0).contains(&td.tau) && (0.0..=1.0).contains(&diff));
    println!(
        "criterion 10 PASS: 1000 datasets worst |Δ| {worst:.2e}, rank fixture -0.5 exact, invariances hold, chance diff {diff:.3}"
    );
}

/// Backend wrapper that fails a fixed set of question ids.
struct FailingBackend<'a> {
    inner: &'a dyn enteval::harness::BackendClient,
    fail_ids: Vec<String>,
}

impl enteval::harness::BackendClient for FailingBackend<'_> {
    fn id(&self) -> String {
        self.inner.id()
    }
    fn answer(
        &self,
        question_id: &str,
        request: &enteval::harness::BackendRequest,
    ) -> Result<enteval::harness::BackendResponse, enteval::harness::BackendError> {
        if self.fail_ids.iter().any(|id| id == question_id) {
            return Err(enteval::harness::BackendError::Transport(
                "injected failure".to_string(),
            ));
        }
        self.inner.answer(question_id, request)
    }
}

fn corpus_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini_corpus")
}

#[test]
fn criterion_11_end_to_end_determinism_and_conservation() {
    // Byte-identical reports from two CLI runs, modulo the timestamp field.
    let binary = env!("CARGO_BIN_EXE_enteval");
    let data = corpus_dir();
    let backend = format!("mock:{}", data.join("backend").display());
    let run_eval_cli = |out: &std::path::Path| {
        let status = std::process::Command::new(binary)
            .args([
                "eval",
                "--data",
                data.to_str().unwrap(),
                "--backend",
                &backend,
                "--out",
                out.to_str().unwrap(),
                "--parallelism",
                "4",
            ])
            .status()
            .expect("eval runs");
        assert!(status.success(), "eval exited with {status}");
    };
    let tmp = tempfile::tempdir().unwrap();
    let out1 = tmp.path().join("run1");
    let out2 = tmp.path().join("run2");
    run_eval_cli(&out1);
    run_eval_cli(&out2);
    let strip_timestamp = |path: &std::path::Path| -> String {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("generated_at_ms"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip_timestamp(&out1.join("report.json")),
        strip_timestamp(&out2.join("report.json")),
        "report.json differs between runs"
    );
    assert_eq!(
        std::fs::read(out1.join("report.md")).unwrap(),
        std::fs::read(out2.join("report.md")).unwrap(),
        "report.md differs between runs"
    );
    assert_eq!(
        std::fs::read(out1.join("scores.jsonl")).unwrap(),
        std::fs::read(out2.join("scores.jsonl")).unwrap(),
        "scores.jsonl differs between runs"
    );

    // Conservation under injected per-item backend failures.
    let dataset = enteval::harness::ingest(&data).unwrap();
    let mock = enteval::harness::MockBackend::open(data.join("backend")).unwrap();
    let flaky = FailingBackend {
        inner: &mock,
        fail_ids: vec![
            "v2-text_alignment".to_string(),
            "v4-dynamic_degree".to_string(),
            "v5-visual_quality".to_string(),
        ],
    };
    let cfg = enteval::harness::EvalConfig::new("conservation");
    let run = enteval::harness::run_eval(&dataset, &flaky, &cfg).unwrap();
    assert_eq!(
        run.question_results.len() + run.failures.len(),
        dataset.questions.len(),
        "conservation broke: {} results + {} failures != {} questions",
        run.question_results.len(),
        run.failures.len(),
        dataset.questions.len()
    );
    assert_eq!(run.failures.len(), 3);
    for id in &flaky.fail_ids {
        assert!(
            run.failures.iter().any(|f| &f.question_id == id),
            "missing failure entry for {id}"
        );
        assert!(
            !run.question_results.iter().any(|r| &r.question_id == id),
            "{id} present in both results and failures"
        );
    }
    println!(
        "criterion 11 PASS: two eval runs byte-identical (timestamp excluded), conservation 22+3=25 under injected failures"
    );
}

#[test]
fn criterion_12_hard_soft_agreement() {
    use enteval::parse::Answer;
    use enteval::qgen::{Dimension, Entity, EntityQuestion};
    use enteval::scoring::{score_video, uniform_weights, QuestionResponse};

    let sets = TokenSets::default();
    let weights = uniform_weights();
    let mut rng = ChaCha8Rng::seed_from_u64(0xCC);
    for case in 0..50 {
        let mut responses = Vec::new();
        let mut qid = 0;
        for dim in Dimension::ALL {
            let per_dim = 1 + (rng.random::<u64>() % 3) as usize;
            for _ in 0..per_dim {
                qid += 1;
                let polarity = if rng.random::<bool>() {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                let answer_yes = rng.random::<bool>();
                // Degenerate distribution: only one side's token present.
                let entries = if answer_yes {
                    vec![("Yes".to_string(), rng.random::<f64>())]
                } else {
                    vec![("No".to_string(), rng.random::<f64>())]
                };
                let logits = AnswerLogits::new(LogitKind::RawLogit, entries).unwrap();
                let raw = format!(
                    "<answer>{}</answer><reason>degenerate case</reason>",
                    if answer_yes { Answer::Yes } else { Answer::No }
                );
                responses.push(QuestionResponse {
                    question: EntityQuestion {
                        question_id: format!("case{case}-q{qid}"),
                        video_id: format!("case{case}"),
                        dimension: dim,
                        entity: Entity {
                            name: "subject".into(),
                            attributes: vec![],
                            actions: vec![],
                            source_prompt: "p".into(),
                            inferred: false,
                        },
                        text: "Does the subject hold up?".into(),
                        polarity,
                        polarity_defaulted: false,
                    },
                    logits: Some(logits),
                    tagged: Some(parse_tagged(&raw, Strictness::Strict)),
                });
            }
        }
        for mode in [ScoreMode::Normalized, ScoreMode::PaperLiteral] {
            let prob = score_video(&responses, &sets, &weights, mode, true).unwrap();
            let hard = score_video(&responses, &sets, &weights, mode, false).unwrap();
            assert_eq!(prob, hard, "trees differ in {mode:?} for case {case}");
        }
    }
    println!(
        "criterion 12 PASS: prob-mode and hard-mode score trees identical on 50 degenerate-distribution videos in both modes"
    );
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn entries_strategy() -> impl Strategy<Value = Vec<(String, f64)>> {
        let sets = TokenSets::default();
        let tokens: Vec<String> = sets
            .yes_tokens
            .iter()
            .chain(&sets.no_tokens)
            .cloned()
            .collect();
        proptest::sample::subsequence(tokens, 1..=10).prop_flat_map(|subset| {
            let n = subset.len();
            (
                Just(subset),
                proptest::collection::vec(-25.0..25.0f64, n..=n),
            )
                .prop_map(|(tokens, values)| tokens.into_iter().zip(values).collect())
        })
    }

    /// Entries guaranteed to contain at least one member of each set.
    fn two_sided_entries_strategy() -> impl Strategy<Value = Vec<(String, f64)>> {
        let sets = TokenSets::default();
        let yes = sets.yes_tokens.clone();
        let no = sets.no_tokens.clone();
        (
            proptest::sample::subsequence(yes, 1..=5),
            proptest::sample::subsequence(no, 1..=5),
        )
            .prop_flat_map(|(yes_subset, no_subset)| {
                let tokens: Vec<String> = yes_subset.into_iter().chain(no_subset).collect();
                let n = tokens.len();
                // Keep gaps small enough that every member's mass stays well
                // above one ulp of the total, where strict monotonicity is
                // observable in f64.
                (Just(tokens), proptest::collection::vec(-6.0..6.0f64, n..=n))
                    .prop_map(|(tokens, values)| tokens.into_iter().zip(values).collect())
            })
    }

    proptest! {
        #[test]
        fn duality_holds_for_arbitrary_logits(entries in entries_strategy()) {
            let sets = TokenSets::default();
            let dist = dist_of(&entries, &sets);
            prop_assert_eq!(
                entity_score(&dist, Polarity::Positive) + entity_score(&dist, Polarity::Negative),
                1.0
            );
        }

        #[test]
        fn monotone_logit_increase_raises_p_yes(
            entries in two_sided_entries_strategy(),
            bump in 0.25..5.0f64,
        ) {
            let sets = TokenSets::default();
            let base = dist_of(&entries, &sets);
            let mut bumped = entries.clone();
            for entry in &mut bumped {
                if sets.yes_tokens.contains(&entry.0) {
                    entry.1 += bump;
                    break;
                }
            }
            let after = dist_of(&bumped, &sets);
            prop_assert!(after.p_yes > base.p_yes);
        }

        #[test]
        fn parse_never_panics(raw in ".{0,200}") {
            let _ = parse_tagged(&raw, Strictness::Strict);
            let _ = parse_tagged(&raw, Strictness::Lenient);
        }
    }
}
