//! Built-in oracle self-checks: every check compares a main code path
//! against an independent reference from [`crate::oracles`] and prints one
//! ok/FAIL line. The acceptance test suite runs the same families at full
//! size; this command is the quick runtime smoke of the same invariants.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grpo::{
    group_advantages, grpo_loss, grpo_loss_and_grad, kl_estimate, sft_cross_entropy_and_grad,
    GrpoConfig, Reward, Rollout, RolloutGroup, ToyPolicy, SEQ_LEN, VOCAB,
};
use crate::metrics::{plcc, srcc, PairedScores};
use crate::oracles;
use crate::parse::{parse_tagged, Answer, Strictness, TaggedResponse, ViolationCode};
use crate::qgen::Polarity;
use crate::scoring::{entity_score, restricted_softmax, AnswerLogits, LogitKind, TokenSets};

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs every self-check, printing one line per check. Returns true when
/// all pass.
pub fn run(out: &mut dyn Write) -> std::io::Result<bool> {
    let checks: Vec<CheckResult> = vec![
        softmax_oracle_check(300),
        softmax_property_check(2000),
        polarity_duality_check(2000),
        mode_consistency_check(500),
        kl_check(2000),
        advantage_check(200),
        correlation_oracle_check(200),
        parser_corpus_check(),
        parser_monotonicity_check(2000),
        gradient_check(20),
    ];
    let mut all = true;
    for check in &checks {
        if check.passed {
            writeln!(out, "ok   {} — {}", check.name, check.detail)?;
        } else {
            all = false;
            writeln!(out, "FAIL {} — {}", check.name, check.detail)?;
        }
    }
    Ok(all)
}

fn random_logit_entries(rng: &mut ChaCha8Rng, sets: &TokenSets) -> Vec<(String, f64)> {
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

pub fn softmax_oracle_check(cases: usize) -> CheckResult {
    let sets = TokenSets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let entries = random_logit_entries(&mut rng, &sets);
        let logits = AnswerLogits::new(LogitKind::RawLogit, entries.clone()).unwrap();
        let dist = restricted_softmax(&logits, &sets).unwrap();
        let (ref_yes, ref_no) = oracles::restricted_softmax_reference(&entries, &sets).unwrap();
        worst = worst
            .max((dist.p_yes - ref_yes).abs())
            .max((dist.p_no - ref_no).abs());
    }
    CheckResult {
        name: "softmax-oracle",
        passed: worst <= 1e-12,
        detail: format!("{cases} cases, worst |Δ| = {worst:.2e} (tolerance 1e-12)"),
    }
}

pub fn softmax_property_check(cases: usize) -> CheckResult {
    let sets = TokenSets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst_norm = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..cases {
        let entries = random_logit_entries(&mut rng, &sets);
        let dist = restricted_softmax(
            &AnswerLogits::new(LogitKind::RawLogit, entries.clone()).unwrap(),
            &sets,
        )
        .unwrap();
        worst_norm = worst_norm.max((dist.p_yes + dist.p_no - 1.0).abs());
        let shift = rng.random::<f64>() * 10.0 - 5.0;
        let shifted: Vec<(String, f64)> = entries
            .iter()
            .map(|(t, v)| (t.clone(), v + shift))
            .collect();
        let dist_shifted = restricted_softmax(
            &AnswerLogits::new(LogitKind::FullVocabLogprob, shifted).unwrap(),
            &sets,
        )
        .unwrap();
        worst_shift = worst_shift.max((dist.p_yes - dist_shifted.p_yes).abs());
    }
    CheckResult {
        name: "softmax-properties",
        passed: worst_norm <= 1e-9 && worst_shift <= 1e-9,
        detail: format!(
            "{cases} cases, worst normalization Δ = {worst_norm:.2e}, worst shift Δ = {worst_shift:.2e}"
        ),
    }
}

pub fn polarity_duality_check(cases: usize) -> CheckResult {
    let sets = TokenSets::default();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut exact = true;
    for _ in 0..cases {
        let entries = random_logit_entries(&mut rng, &sets);
        let dist = restricted_softmax(
            &AnswerLogits::new(LogitKind::RawLogit, entries).unwrap(),
            &sets,
        )
        .unwrap();
        let total =
            entity_score(&dist, Polarity::Positive) + entity_score(&dist, Polarity::Negative);
        if total != 1.0 {
            exact = false;
        }
    }
    CheckResult {
        name: "polarity-duality",
        passed: exact,
        detail: format!("{cases} cases, score(d,1) + score(d,0) == 1 exactly"),
    }
}

pub fn mode_consistency_check(cases: usize) -> CheckResult {
    use crate::scoring::{dimension_score, ScoreMode};
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut exact = true;
    for _ in 0..cases {
        let n = 1 + (rng.random::<u64>() % 20) as usize;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let literal = dimension_score(&scores, ScoreMode::PaperLiteral).unwrap();
        let normalized = dimension_score(&scores, ScoreMode::Normalized).unwrap();
        if normalized != literal / n as f64 {
            exact = false;
        }
    }
    CheckResult {
        name: "mode-consistency",
        passed: exact,
        detail: format!("{cases} cases, normalized == literal / count bitwise"),
    }
}

pub fn kl_check(cases: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut non_negative = true;
    let mut zero_at_equal = true;
    for _ in 0..cases {
        let a = -10.0 * rng.random::<f64>();
        let b = -10.0 * rng.random::<f64>();
        if kl_estimate(a, b).unwrap() < 0.0 {
            non_negative = false;
        }
        if kl_estimate(a, a).unwrap() != 0.0 {
            zero_at_equal = false;
        }
    }
    let k2 = kl_estimate(-1.0 + 2.0f64.ln(), -1.0).unwrap();
    let closed_form_ok = (k2 - (2.0 - 2.0f64.ln() - 1.0)).abs() <= 1e-12;
    CheckResult {
        name: "kl-estimator",
        passed: non_negative && zero_at_equal && closed_form_ok,
        detail: format!(
            "{cases} pairs non-negative, zero at equality, r=2 case Δ = {:.2e}",
            (k2 - (2.0 - 2.0f64.ln() - 1.0)).abs()
        ),
    }
}

pub fn advantage_check(groups: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let g = 16;
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for _ in 0..groups {
        let rewards: Vec<f64> = loop {
            let r: Vec<f64> = (0..g).map(|_| (rng.random::<u64>() % 3) as f64).collect();
            if r.iter().any(|x| *x != r[0]) {
                break r;
            }
        };
        let adv = group_advantages(&rewards, g).unwrap();
        let mean = adv.iter().sum::<f64>() / g as f64;
        let var = adv.iter().map(|a| a * a).sum::<f64>() / g as f64;
        worst_mean = worst_mean.max(mean.abs());
        worst_std = worst_std.max((var.sqrt() - 1.0).abs());
    }
    let degenerate = group_advantages(&vec![2.0; g], g).unwrap();
    CheckResult {
        name: "advantage-normalization",
        passed: worst_mean <= 1e-9 && worst_std <= 1e-6 && degenerate.iter().all(|a| *a == 0.0),
        detail: format!(
            "{groups} groups of {g}, worst |mean| = {worst_mean:.2e}, worst |std-1| = {worst_std:.2e}, degenerate group all-zero"
        ),
    }
}

pub fn correlation_oracle_check(cases: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = 2 + (rng.random::<u64>() % 40) as usize;
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
        match (srcc(&paired), oracles::spearman_reference(&x, &y)) {
            (Ok(v), Some(r)) => worst = worst.max((v - r).abs()),
            (Err(_), None) => {}
            _ => worst = f64::INFINITY,
        }
        match (plcc(&paired), oracles::pearson_reference(&x, &y)) {
            (Ok(v), Some(r)) => worst = worst.max((v - r).abs()),
            (Err(_), None) => {}
            _ => worst = f64::INFINITY,
        }
    }
    let fixture = PairedScores::new(vec![
        ("a".into(), 1.0, 3.0),
        ("b".into(), 2.0, 1.0),
        ("c".into(), 3.0, 2.0),
    ])
    .unwrap();
    let fixture_exact = srcc(&fixture).unwrap() == -0.5;
    CheckResult {
        name: "correlation-oracles",
        passed: worst <= 1e-12 && fixture_exact,
        detail: format!("{cases} datasets, worst |Δ| = {worst:.2e}, rank fixture == -0.5 exactly"),
    }
}

#[derive(serde::Deserialize)]
pub struct ParserCase {
    pub name: String,
    pub input: String,
    pub strict_violations: Vec<String>,
    pub lenient_violations: Vec<String>,
    pub answer: Option<String>,
    pub reason: Option<String>,
}

pub fn parser_corpus() -> Vec<ParserCase> {
    serde_json::from_str(include_str!("../data/parser_corpus.json"))
        .expect("bundled parser corpus parses")
}

fn violation_names(response: &TaggedResponse) -> Vec<String> {
    response
        .violations
        .iter()
        .map(|v| format!("{v:?}"))
        .collect()
}

pub fn check_parser_case(case: &ParserCase) -> Result<(), String> {
    let strict = parse_tagged(&case.input, Strictness::Strict);
    let lenient = parse_tagged(&case.input, Strictness::Lenient);
    if violation_names(&strict) != case.strict_violations {
        return Err(format!(
            "{}: strict violations {:?}, expected {:?}",
            case.name,
            violation_names(&strict),
            case.strict_violations
        ));
    }
    if violation_names(&lenient) != case.lenient_violations {
        return Err(format!(
            "{}: lenient violations {:?}, expected {:?}",
            case.name,
            violation_names(&lenient),
            case.lenient_violations
        ));
    }
    let expected_answer = case.answer.as_deref().map(|a| match a {
        "Yes" => Answer::Yes,
        _ => Answer::No,
    });
    if strict.answer != expected_answer {
        return Err(format!(
            "{}: answer {:?}, expected {:?}",
            case.name, strict.answer, expected_answer
        ));
    }
    if strict.reason.as_deref() != case.reason.as_deref() {
        return Err(format!(
            "{}: reason {:?}, expected {:?}",
            case.name, strict.reason, case.reason
        ));
    }
    if strict.format_valid != strict.violations.is_empty() {
        return Err(format!("{}: format_valid inconsistent", case.name));
    }
    Ok(())
}

pub fn parser_corpus_check() -> CheckResult {
    let cases = parser_corpus();
    let count = cases.len();
    for case in &cases {
        if let Err(message) = check_parser_case(case) {
            return CheckResult {
                name: "parser-corpus",
                passed: false,
                detail: message,
            };
        }
    }
    CheckResult {
        name: "parser-corpus",
        passed: true,
        detail: format!("{count} cases with exact violation sets"),
    }
}

/// Random tag-soup generator for fuzzing the parser.
pub fn random_tag_soup(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 14] = [
        "<answer>",
        "</answer>",
        "<reason>",
        "</reason>",
        "Yes",
        "No",
        "yes",
        "no",
        "maybe",
        "the dog runs",
        " ",
        "\n",
        "🎬",
        "fine",
    ];
    let n = 1 + (rng.random::<u64>() % 12) as usize;
    (0..n)
        .map(|_| PIECES[(rng.random::<u64>() % PIECES.len() as u64) as usize])
        .collect()
}

pub fn parser_monotonicity_check(cases: usize) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for _ in 0..cases {
        let soup = random_tag_soup(&mut rng);
        let strict = parse_tagged(&soup, Strictness::Strict);
        let lenient = parse_tagged(&soup, Strictness::Lenient);
        if strict.format_valid && !lenient.format_valid {
            return CheckResult {
                name: "parser-monotonicity",
                passed: false,
                detail: format!("strict-valid but lenient-invalid input: {soup:?}"),
            };
        }
        // Lenient violations are a subset of strict ones.
        if !lenient.violations.iter().all(|v| {
            strict.violations.contains(v) || *v != ViolationCode::AnswerTokenOutsideAnswerTag
        }) {
            return CheckResult {
                name: "parser-monotonicity",
                passed: false,
                detail: format!("violation subset broken for input: {soup:?}"),
            };
        }
    }
    CheckResult {
        name: "parser-monotonicity",
        passed: true,
        detail: format!("{cases} fuzzed strings, strict-valid ⊆ lenient-valid"),
    }
}

/// One random, kink-free instance for the GRPO gradient check.
pub struct GradCheckInstance {
    pub policy: ToyPolicy,
    pub old: ToyPolicy,
    pub reference: ToyPolicy,
    pub features: Vec<f64>,
    pub tokens: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub cfg: GrpoConfig,
}

pub fn random_grpo_instance(seed: u64) -> GradCheckInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    let feature_dim = 4 + (rng.random::<u64>() % 3) as usize;
    let temperature = 0.6 + rng.random::<f64>() * 0.8;
    let group_size = 4;
    let cfg = GrpoConfig {
        group_size,
        seed,
        ..GrpoConfig::default()
    };
    loop {
        let policy = ToyPolicy::new_random(feature_dim, temperature, 0.8, &mut rng);
        let old = ToyPolicy::new_random(feature_dim, temperature, 0.8, &mut rng);
        let reference = ToyPolicy::new_random(feature_dim, temperature, 0.8, &mut rng);
        let features: Vec<f64> = (0..feature_dim)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let tokens: Vec<Vec<usize>> = (0..group_size)
            .map(|_| old.sample_sequence(&features, &mut rng))
            .collect();
        let rewards: Vec<f64> = loop {
            let r: Vec<f64> = (0..group_size)
                .map(|_| (rng.random::<u64>() % 3) as f64)
                .collect();
            if r.iter().any(|x| *x != r[0]) {
                break r;
            }
        };
        let instance = GradCheckInstance {
            policy,
            old,
            reference,
            features,
            tokens,
            rewards,
            cfg: cfg.clone(),
        };
        // Finite differences are only meaningful away from the clip kinks.
        if instance
            .sequence_ratios()
            .iter()
            .all(|r| (r - 0.8).abs() > 1e-3 && (r - 1.2).abs() > 1e-3)
        {
            return instance;
        }
    }
}

impl GradCheckInstance {
    fn build_group(&self, policy: &ToyPolicy) -> RolloutGroup {
        let outputs: Vec<Rollout> = self
            .tokens
            .iter()
            .zip(&self.rewards)
            .map(|(tokens, reward)| Rollout {
                tagged: parse_tagged("<answer>Yes</answer><reason>r</reason>", Strictness::Strict),
                logprob_new: policy.sequence_logprobs(&self.features, tokens),
                logprob_old: self.old.sequence_logprobs(&self.features, tokens),
                logprob_ref: self.reference.sequence_logprobs(&self.features, tokens),
                reward: Reward {
                    accuracy: (reward - 1.0).max(0.0),
                    format: reward.min(1.0),
                },
                advantage: 0.0,
            })
            .collect();
        RolloutGroup::new("gradcheck", outputs, &self.cfg).expect("well-formed group")
    }

    fn sequence_ratios(&self) -> Vec<f64> {
        let group = self.build_group(&self.policy);
        group
            .outputs
            .iter()
            .map(|r| {
                let t = r.logprob_new.len() as f64;
                r.logprob_new
                    .iter()
                    .zip(&r.logprob_old)
                    .map(|(n, o)| (n - o).exp())
                    .sum::<f64>()
                    / t
            })
            .collect()
    }

    pub fn loss_at(&self, params: &[f64]) -> f64 {
        let mut policy = self.policy.clone();
        policy.params_mut().copy_from_slice(params);
        grpo_loss(&self.build_group(&policy), &self.cfg)
            .expect("loss evaluates")
            .total
    }

    pub fn analytic_gradient(&self) -> Vec<f64> {
        let group = self.build_group(&self.policy);
        let (_, lp_grads) = grpo_loss_and_grad(&group, &self.cfg).expect("loss evaluates");
        let mut grad = vec![0.0; self.policy.param_count()];
        for (tokens, lp_grad) in self.tokens.iter().zip(&lp_grads) {
            self.policy
                .accumulate_logprob_grad(&self.features, tokens, lp_grad, &mut grad);
        }
        grad
    }
}

/// One random instance for the cross-entropy gradient check.
pub struct SftCheckInstance {
    pub policy: ToyPolicy,
    pub features: Vec<f64>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

pub fn random_sft_instance(seed: u64) -> SftCheckInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491).wrapping_add(3));
    let feature_dim = 4 + (rng.random::<u64>() % 3) as usize;
    let temperature = 0.6 + rng.random::<f64>() * 0.8;
    let policy = ToyPolicy::new_random(feature_dim, temperature, 0.8, &mut rng);
    let features: Vec<f64> = (0..feature_dim)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let targets: Vec<usize> = (0..SEQ_LEN)
        .map(|_| (rng.random::<u64>() % VOCAB.len() as u64) as usize)
        .collect();
    let mask: Vec<bool> = loop {
        let m: Vec<bool> = (0..SEQ_LEN).map(|_| rng.random::<bool>()).collect();
        if m.iter().any(|x| *x) {
            break m;
        }
    };
    SftCheckInstance {
        policy,
        features,
        targets,
        mask,
    }
}

impl SftCheckInstance {
    pub fn loss_at(&self, params: &[f64]) -> f64 {
        let mut policy = self.policy.clone();
        policy.params_mut().copy_from_slice(params);
        let rows = policy.logprob_rows(&self.features);
        sft_cross_entropy_and_grad(&self.targets, &rows, Some(&self.mask))
            .expect("loss evaluates")
            .0
    }

    pub fn analytic_gradient(&self) -> Vec<f64> {
        let rows = self.policy.logprob_rows(&self.features);
        let (_, coeffs) = sft_cross_entropy_and_grad(&self.targets, &rows, Some(&self.mask))
            .expect("loss evaluates");
        let mut grad = vec![0.0; self.policy.param_count()];
        self.policy
            .accumulate_logprob_grad(&self.features, &self.targets, &coeffs, &mut grad);
        grad
    }
}

pub fn gradient_check(instances: usize) -> CheckResult {
    let mut worst = 0.0f64;
    for seed in 0..instances as u64 {
        let grpo = random_grpo_instance(seed);
        let fd = oracles::central_difference(&mut |p| grpo.loss_at(p), grpo.policy.params(), 1e-6);
        worst = worst.max(oracles::gradient_relative_error(
            &grpo.analytic_gradient(),
            &fd,
        ));

        let sft = random_sft_instance(seed);
        let fd = oracles::central_difference(&mut |p| sft.loss_at(p), sft.policy.params(), 1e-6);
        worst = worst.max(oracles::gradient_relative_error(
            &sft.analytic_gradient(),
            &fd,
        ));
    }
    CheckResult {
        name: "gradient-check",
        passed: worst <= 1e-5,
        detail: format!(
            "{instances} random instances, worst relative error = {worst:.2e} (tolerance 1e-5)"
        ),
    }
}
