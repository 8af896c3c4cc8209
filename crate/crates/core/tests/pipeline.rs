//! End-to-end pipeline tests: cache-backed resumability, normalized-mode
//! enforcement in reports, offline scoring through the CLI, and fatal
//! backend handling.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use enteval::harness::{
    emit_report, ingest, run_eval, BackendClient, BackendError, BackendRequest, BackendResponse,
    EvalConfig, MockBackend, ReportFormat, ScoreRecord,
};
use enteval::scoring::ScoreMode;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/mini_corpus")
}

struct CountingBackend<'a> {
    inner: &'a dyn BackendClient,
    calls: AtomicUsize,
    called_ids: Mutex<Vec<String>>,
    fail_ids: Vec<String>,
}

impl<'a> CountingBackend<'a> {
    fn new(inner: &'a dyn BackendClient, fail_ids: Vec<String>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            called_ids: Mutex::new(Vec::new()),
            fail_ids,
        }
    }
}

impl BackendClient for CountingBackend<'_> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn answer(
        &self,
        question_id: &str,
        request: &BackendRequest,
    ) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.called_ids
            .lock()
            .unwrap()
            .push(question_id.to_string());
        if self.fail_ids.iter().any(|id| id == question_id) {
            return Err(BackendError::Transport("injected failure".into()));
        }
        self.inner.answer(question_id, request)
    }
}

#[test]
fn bundled_corpus_ingests_cleanly() {
    let dataset = ingest(corpus_dir()).unwrap();
    assert_eq!(dataset.videos.len(), 5);
    assert_eq!(dataset.questions.len(), 25);
    assert_eq!(dataset.truths.len(), 25);
}

#[test]
fn cache_resume_matches_uninterrupted_run() {
    let dataset = ingest(corpus_dir()).unwrap();
    let mock = MockBackend::open(corpus_dir().join("backend")).unwrap();
    let tmp = tempfile::tempdir().unwrap();

    // Reference: healthy, uncached run.
    let cfg = EvalConfig::new("resume");
    let reference = run_eval(&dataset, &mock, &cfg).unwrap();
    assert!(reference.failures.is_empty());

    // First pass: three questions fail, everything else lands in the cache.
    let fail_ids = vec![
        "v1-factual_consistency".to_string(),
        "v3-dynamic_degree".to_string(),
        "v5-temporal_consistency".to_string(),
    ];
    let mut cached_cfg = EvalConfig::new("resume");
    cached_cfg.cache_dir = Some(tmp.path().join("cache"));
    let flaky = CountingBackend::new(&mock, fail_ids.clone());
    let first = run_eval(&dataset, &flaky, &cached_cfg).unwrap();
    assert_eq!(first.failures.len(), 3);
    assert_eq!(first.question_results.len() + first.failures.len(), 25);
    assert_eq!(flaky.calls.load(Ordering::SeqCst), 25);

    // Second pass with a healthy backend: cached questions are not re-asked,
    // only the three failures hit the backend.
    let healthy = CountingBackend::new(&mock, Vec::new());
    let second = run_eval(&dataset, &healthy, &cached_cfg).unwrap();
    assert!(second.failures.is_empty());
    let mut called = healthy.called_ids.lock().unwrap().clone();
    called.sort();
    let mut expected = fail_ids.clone();
    expected.sort();
    assert_eq!(
        called, expected,
        "resume must only re-query failed questions"
    );

    // The resumed run equals the uninterrupted run.
    assert_eq!(
        serde_json::to_string(&second).unwrap(),
        serde_json::to_string(&reference).unwrap()
    );
}

#[test]
fn fatal_backend_aborts_run() {
    let dataset = ingest(corpus_dir()).unwrap();
    struct DeadBackend;
    impl BackendClient for DeadBackend {
        fn id(&self) -> String {
            "dead".into()
        }
        fn answer(
            &self,
            _question_id: &str,
            _request: &BackendRequest,
        ) -> Result<BackendResponse, BackendError> {
            Err(BackendError::Transport("connection refused".into()))
        }
    }
    let cfg = EvalConfig::new("dead");
    let err = run_eval(&dataset, &DeadBackend, &cfg).unwrap_err();
    assert!(
        matches!(err, enteval::harness::HarnessError::FatalBackend(_)),
        "unexpected error: {err}"
    );
}

/// Two questions per dimension so literal sums and normalized means differ.
struct InlineBackend;

impl BackendClient for InlineBackend {
    fn id(&self) -> String {
        "inline".into()
    }
    fn answer(
        &self,
        question_id: &str,
        _request: &BackendRequest,
    ) -> Result<BackendResponse, BackendError> {
        // q1-style ids answer Yes confidently, q2-style less so.
        let p_yes: f64 = if question_id.ends_with("q1") {
            0.9
        } else {
            0.6
        };
        let raw = "<answer> Yes</answer><reason> holds up</reason>".to_string();
        Ok(BackendResponse {
            raw_text: raw,
            per_token: vec![
                enteval::harness::TokenLogprob {
                    token: "<answer>".into(),
                    logprob: -0.01,
                    top_k_alternatives: vec![],
                },
                enteval::harness::TokenLogprob {
                    token: " Yes".into(),
                    logprob: p_yes.ln(),
                    top_k_alternatives: vec![
                        (" Yes".into(), p_yes.ln()),
                        (" No".into(), (1.0 - p_yes).ln()),
                    ],
                },
                enteval::harness::TokenLogprob {
                    token: "</answer>".into(),
                    logprob: -0.01,
                    top_k_alternatives: vec![],
                },
                enteval::harness::TokenLogprob {
                    token: "<reason>".into(),
                    logprob: -0.01,
                    top_k_alternatives: vec![],
                },
                enteval::harness::TokenLogprob {
                    token: " holds up".into(),
                    logprob: -0.2,
                    top_k_alternatives: vec![],
                },
                enteval::harness::TokenLogprob {
                    token: "</reason>".into(),
                    logprob: -0.01,
                    top_k_alternatives: vec![],
                },
            ],
        })
    }
}

/// One video with two questions in every dimension, so literal sums and
/// normalized means differ.
fn two_per_dimension_dataset(dir: &Path) {
    let video = r#"{"schema_version":1,"video_id":"w1","prompt_id":"p","generator_name":"g","media_ref":"m.mp4"}"#;
    let question = |qid: &str, dim: &str| {
        format!(
            r#"{{"schema_version":1,"question_id":"{qid}","video_id":"w1","dimension":"{dim}","entity":{{"name":"dog","attributes":[],"actions":[],"source_prompt":"p","inferred":false}},"text":"Is it sharp?","polarity":1,"polarity_defaulted":false}}"#
        )
    };
    std::fs::write(dir.join("videos.jsonl"), format!("{video}\n")).unwrap();
    let mut lines = String::new();
    for dim in enteval::Dimension::ALL {
        for k in 1..=2 {
            lines.push_str(&question(&format!("w1-{dim}-q{k}"), dim.canonical_name()));
            lines.push('\n');
        }
    }
    std::fs::write(dir.join("questions.jsonl"), lines).unwrap();
}

#[test]
fn reports_use_normalized_scores_even_in_paper_literal_runs() {
    let tmp = tempfile::tempdir().unwrap();
    two_per_dimension_dataset(tmp.path());
    let dataset = ingest(tmp.path()).unwrap();

    let mut cfg = EvalConfig::new("literal");
    cfg.mode = ScoreMode::PaperLiteral;
    let run = run_eval(&dataset, &InlineBackend, &cfg).unwrap();

    // The stored tree carries the literal sums, question-count dependent.
    let tree = &run.video_scores[0].tree;
    for dim in enteval::Dimension::ALL {
        assert!(
            (tree.dim_scores[&dim] - 1.5).abs() < 1e-12,
            "literal sum 0.9 + 0.6 for {dim}"
        );
        assert_eq!(tree.dim_counts[&dim], 2);
    }

    // The cross-video table reports the mean, not the sum.
    let out = tmp.path().join("report");
    emit_report(&run, ReportFormat::Markdown, &out).unwrap();
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(
        md.contains("| w1 | 0.7500 |"),
        "per-video table must show the normalized mean: {md}"
    );
    assert!(
        !md.contains("1.5000"),
        "literal sums must not leak into the table"
    );
}

#[test]
fn score_cli_round_trip() {
    let binary = env!("CARGO_BIN_EXE_enteval");
    let tmp = tempfile::tempdir().unwrap();
    two_per_dimension_dataset(tmp.path());
    let responses = tmp.path().join("responses.jsonl");
    let line = |qid: &str, p_yes: f64| {
        serde_json::json!({
            "schema_version": 1,
            "question_id": qid,
            "raw_text": "<answer>Yes</answer><reason>holds up</reason>",
            "answer_logits": [
                {"token": " Yes", "value": p_yes.ln(), "kind": "full_vocab_logprob"},
                {"token": " No", "value": (1.0 - p_yes).ln(), "kind": "full_vocab_logprob"},
            ],
        })
        .to_string()
    };
    let mut lines = String::new();
    for dim in enteval::Dimension::ALL {
        lines.push_str(&line(&format!("w1-{dim}-q1"), 0.9));
        lines.push('\n');
        lines.push_str(&line(&format!("w1-{dim}-q2"), 0.6));
        lines.push('\n');
    }
    std::fs::write(&responses, lines).unwrap();
    let out = tmp.path().join("scores.jsonl");
    let status = std::process::Command::new(binary)
        .args([
            "score",
            "--questions",
            tmp.path().join("questions.jsonl").to_str().unwrap(),
            "--responses",
            responses.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let record: ScoreRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(record.video_id, "w1");
    assert!(record.prob_mode);
    assert!((record.overall - 0.75).abs() < 1e-9, "{}", record.overall);
    assert!(!record.partial);
    assert_eq!(record.dim_counts.len(), 5);
}

#[test]
fn qgen_cli_is_idempotent() {
    let binary = env!("CARGO_BIN_EXE_enteval");
    let tmp = tempfile::tempdir().unwrap();
    let mock_dir = tmp.path().join("mock");
    std::fs::create_dir_all(&mock_dir).unwrap();
    std::fs::write(
        mock_dir.join("_fallback.txt"),
        "ENTITY: dog | actions: runs\nQ1: Is the dog crisp? [POS]\nQ2: Does the dog smear? [NEG]\n",
    )
    .unwrap();
    std::fs::write(
        tmp.path().join("prompts.jsonl"),
        "{\"schema_version\":1,\"prompt_id\":\"p1\",\"text\":\"a dog runs\"}\n",
    )
    .unwrap();
    let run = |out: &Path| {
        let status = std::process::Command::new(binary)
            .args([
                "qgen",
                "--prompts",
                tmp.path().join("prompts.jsonl").to_str().unwrap(),
                "--backend",
                &format!("mock:{}", mock_dir.display()),
                "--out",
                out.to_str().unwrap(),
                "--parallelism",
                "3",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.join("questions.jsonl")).unwrap()
    };
    let first = run(&tmp.path().join("out1"));
    let second = run(&tmp.path().join("out2"));
    assert_eq!(first, second, "questions.jsonl must be byte-identical");
    assert!(!first.is_empty());
}
