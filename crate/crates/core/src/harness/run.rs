//! Evaluation runs: per-question backend calls through the cache, response
//! parsing, answer-position probability extraction, per-video score
//! assembly, and the metrics block.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::backend::{BackendClient, BackendError, BackendRequest, BackendResponse};
use super::cache::ResponseCache;
use super::ingest::Dataset;
use super::HarnessError;
use crate::metrics::{plcc, srcc, MetricsError, PairedScores};
use crate::parse::{
    extract_answer_token_position, parse_tagged_with, spans_from_tokens, AnswerWords, Strictness,
    TaggedResponse,
};
use crate::qgen::{Dimension, EntityQuestion};
use crate::scoring::{
    hard_entity_score, overall_score, restricted_softmax, score_video, uniform_weights,
    AnswerDistribution, AnswerLogits, GroundTruth, LogitKind, QuestionResponse, ResponseRecord,
    ScoreMode, ScoreTree, TokenSets,
};
use crate::util::{fnv1a64_hex, run_indexed};

pub const RUN_SCHEMA_VERSION: u32 = 1;

/// Everything one evaluation run is parameterized by.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub run_id: String,
    pub mode: ScoreMode,
    pub strictness: Strictness,
    pub weights: BTreeMap<Dimension, f64>,
    pub token_sets: TokenSets,
    pub want_logprobs: bool,
    pub top_k: usize,
    pub system_template_id: String,
    pub parallelism: usize,
    pub cache_dir: Option<PathBuf>,
}

impl EvalConfig {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            mode: ScoreMode::Normalized,
            strictness: Strictness::Strict,
            weights: uniform_weights(),
            token_sets: TokenSets::default(),
            want_logprobs: true,
            top_k: 10,
            system_template_id: "answer_v1".to_string(),
            parallelism: 1,
            cache_dir: None,
        }
    }

    /// Hash of the scoring-relevant settings. Cache keys include it, so a
    /// config change invalidates replay.
    pub fn provenance_hash(&self) -> String {
        let canonical = serde_json::json!({
            "mode": self.mode,
            "strictness": self.strictness,
            "weights": self.weights,
            "token_sets": self.token_sets,
            "want_logprobs": self.want_logprobs,
            "top_k": self.top_k,
            "system_template_id": self.system_template_id,
        });
        fnv1a64_hex(canonical.to_string().as_bytes())
    }
}

/// Config provenance embedded in every run artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub mode: ScoreMode,
    pub strictness: Strictness,
    pub weights: BTreeMap<Dimension, f64>,
    pub token_sets: TokenSets,
    pub want_logprobs: bool,
    pub top_k: usize,
    pub system_template_id: String,
    pub backend_id: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureStage {
    Dataset,
    Backend,
    Score,
}

/// One question that could not be scored. The run completes regardless.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureEntry {
    pub question_id: String,
    pub video_id: String,
    pub stage: FailureStage,
    pub error: String,
}

/// Parsed response and, when available, the restricted answer distribution
/// for one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub video_id: String,
    pub dimension: Dimension,
    pub tagged: TaggedResponse,
    pub distribution: Option<AnswerDistribution>,
    #[serde(skip)]
    pub logits: Option<AnswerLogits>,
    #[serde(skip)]
    pub from_cache: bool,
}

/// Score tree for one video, with the scoring flavour recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    /// False means the video was scored from hard answers ("w/o prob").
    pub prob_mode: bool,
    pub tree: ScoreTree,
}

/// Acc / SRCC / PLCC for one report row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionMetrics {
    pub n_questions: usize,
    pub accuracy: Option<f64>,
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub per_dimension: BTreeMap<Dimension, DimensionMetrics>,
    pub overall: DimensionMetrics,
    pub n_videos_correlated: usize,
    pub degenerate_flags: Vec<String>,
}

/// Full outcome of one evaluation run. Every input question appears in
/// exactly one of `question_results` or `failures`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRun {
    pub schema_version: u32,
    pub run_id: String,
    pub config: ConfigSnapshot,
    pub video_scores: Vec<VideoScore>,
    pub question_results: Vec<QuestionResult>,
    pub failures: Vec<FailureEntry>,
    pub metrics: Option<MetricsBlock>,
}

enum Outcome {
    Scored(Box<QuestionResult>),
    Failed {
        entry: FailureEntry,
        transport: bool,
    },
}

/// Runs the full evaluation: for each question, backend call (through the
/// cache when configured), tag parsing, restricted softmax when logprobs
/// are available, then per-video score trees and metrics. Per-item
/// failures are recorded and the run completes; only a backend that fails
/// every single question aborts the run.
pub fn run_eval(
    dataset: &Dataset,
    backend: &dyn BackendClient,
    cfg: &EvalConfig,
) -> Result<EvalRun, HarnessError> {
    cfg.token_sets.validate()?;
    let weight_sum: f64 = cfg.weights.values().sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(HarnessError::InvalidConfig(format!(
            "weights sum to {weight_sum}, expected 1"
        )));
    }
    let cache = match &cfg.cache_dir {
        Some(dir) => Some(ResponseCache::open(dir).map_err(|source| HarnessError::Io {
            path: dir.display().to_string(),
            source,
        })?),
        None => None,
    };
    let config_hash = cfg.provenance_hash();
    let backend_id = backend.id();
    let words =
        AnswerWords::from_token_strings(&cfg.token_sets.yes_tokens, &cfg.token_sets.no_tokens);

    let outcomes = run_indexed(&dataset.questions, cfg.parallelism.max(1), |_, question| {
        process_question(
            question,
            dataset,
            backend,
            cfg,
            cache.as_ref(),
            &backend_id,
            &config_hash,
            &words,
        )
    });

    let mut pre_results: Vec<QuestionResult> = Vec::new();
    let mut failures: Vec<FailureEntry> = Vec::new();
    let mut transport_failures = 0usize;
    for outcome in outcomes {
        match outcome {
            Outcome::Scored(result) => pre_results.push(*result),
            Outcome::Failed { entry, transport } => {
                if transport {
                    transport_failures += 1;
                }
                failures.push(entry);
            }
        }
    }
    if !dataset.questions.is_empty()
        && pre_results.is_empty()
        && transport_failures == failures.len()
    {
        return Err(HarnessError::FatalBackend(
            failures
                .first()
                .map(|f| f.error.clone())
                .unwrap_or_default(),
        ));
    }

    let question_map: BTreeMap<&str, &EntityQuestion> = dataset
        .questions
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect();

    // Per-video assembly: a video scores in probability mode only when every
    // surviving question carries a distribution; otherwise it degrades to
    // hard answers and questions without one become score failures.
    let mut video_scores = Vec::new();
    let mut question_results: Vec<QuestionResult> = Vec::new();
    for video in &dataset.videos {
        let candidates: Vec<QuestionResult> = pre_results
            .iter()
            .filter(|r| r.video_id == video.video_id)
            .cloned()
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let prob_mode = cfg.want_logprobs && candidates.iter().all(|r| r.distribution.is_some());
        let mut scored = Vec::new();
        for result in candidates {
            if prob_mode || result.tagged.answer.is_some() {
                scored.push(result);
            } else {
                failures.push(FailureEntry {
                    question_id: result.question_id.clone(),
                    video_id: result.video_id.clone(),
                    stage: FailureStage::Score,
                    error: "no parsed answer for hard scoring".to_string(),
                });
            }
        }
        if scored.is_empty() {
            continue;
        }
        let responses: Vec<QuestionResponse> = scored
            .iter()
            .map(|r| QuestionResponse {
                question: (*question_map
                    .get(r.question_id.as_str())
                    .expect("result derives from dataset question"))
                .clone(),
                logits: r.logits.clone(),
                tagged: Some(r.tagged.clone()),
            })
            .collect();
        match score_video(
            &responses,
            &cfg.token_sets,
            &cfg.weights,
            cfg.mode,
            prob_mode,
        ) {
            Ok(tree) => {
                video_scores.push(VideoScore {
                    video_id: video.video_id.clone(),
                    prob_mode,
                    tree,
                });
                question_results.extend(scored);
            }
            Err(err) => {
                let message = err.to_string();
                for result in scored {
                    failures.push(FailureEntry {
                        question_id: result.question_id,
                        video_id: result.video_id,
                        stage: FailureStage::Score,
                        error: message.clone(),
                    });
                }
            }
        }
    }

    let metrics = build_metrics(dataset, &question_results, &video_scores, cfg);

    Ok(EvalRun {
        schema_version: RUN_SCHEMA_VERSION,
        run_id: cfg.run_id.clone(),
        config: ConfigSnapshot {
            mode: cfg.mode,
            strictness: cfg.strictness,
            weights: cfg.weights.clone(),
            token_sets: cfg.token_sets.clone(),
            want_logprobs: cfg.want_logprobs,
            top_k: cfg.top_k,
            system_template_id: cfg.system_template_id.clone(),
            backend_id,
            config_hash,
        },
        video_scores,
        question_results,
        failures,
        metrics,
    })
}

#[allow(clippy::too_many_arguments)]
fn process_question(
    question: &EntityQuestion,
    dataset: &Dataset,
    backend: &dyn BackendClient,
    cfg: &EvalConfig,
    cache: Option<&ResponseCache>,
    backend_id: &str,
    config_hash: &str,
    words: &AnswerWords,
) -> Outcome {
    let fail = |stage, transport, error: String| Outcome::Failed {
        entry: FailureEntry {
            question_id: question.question_id.clone(),
            video_id: question.video_id.clone(),
            stage,
            error,
        },
        transport,
    };
    let Some(video) = dataset.video(&question.video_id) else {
        return fail(
            FailureStage::Dataset,
            false,
            format!("unknown video {}", question.video_id),
        );
    };
    let request = BackendRequest {
        media_ref: video.media_ref.clone(),
        question_text: question.text.clone(),
        system_template_id: cfg.system_template_id.clone(),
        want_logprobs: cfg.want_logprobs,
        top_k: cfg.top_k,
    };

    let mut from_cache = false;
    let response: BackendResponse =
        match cache.and_then(|c| c.get(backend_id, &question.question_id, config_hash)) {
            Some(hit) => {
                from_cache = true;
                hit
            }
            None => match backend.answer(&question.question_id, &request) {
                Ok(resp) => {
                    if let Err(err) = resp.validate(&request) {
                        return fail(FailureStage::Backend, false, err.to_string());
                    }
                    if let Some(c) = cache {
                        // A failed cache write only costs a later re-query.
                        let _ = c.put(backend_id, &question.question_id, config_hash, &resp);
                    }
                    resp
                }
                Err(err) => {
                    let transport = matches!(err, BackendError::Transport(_));
                    return fail(FailureStage::Backend, transport, err.to_string());
                }
            },
        };

    let tagged = parse_tagged_with(&response.raw_text, cfg.strictness, words);
    let mut logits = None;
    let mut distribution = None;
    if cfg.want_logprobs && !response.per_token.is_empty() {
        let tokens: Vec<&str> = response
            .per_token
            .iter()
            .map(|t| t.token.as_str())
            .collect();
        let spans = spans_from_tokens(&tokens);
        if let Ok(index) = extract_answer_token_position(&response.raw_text, &spans) {
            let chosen = &response.per_token[index];
            let mut entries = vec![(chosen.token.clone(), chosen.logprob)];
            for (token, logprob) in &chosen.top_k_alternatives {
                if !entries.iter().any(|(t, _)| t == token) {
                    entries.push((token.clone(), *logprob));
                }
            }
            if let Ok(lg) = AnswerLogits::new(LogitKind::FullVocabLogprob, entries) {
                let lg = lg.with_position(question.question_id.clone(), index);
                if let Ok(dist) = restricted_softmax(&lg, &cfg.token_sets) {
                    distribution = Some(dist);
                    logits = Some(lg);
                }
            }
        }
    }

    if distribution.is_none() && tagged.answer.is_none() {
        return fail(
            FailureStage::Score,
            false,
            "response yields neither an answer distribution nor a parsed answer".to_string(),
        );
    }
    Outcome::Scored(Box::new(QuestionResult {
        question_id: question.question_id.clone(),
        video_id: question.video_id.clone(),
        dimension: question.dimension,
        tagged,
        distribution,
        logits,
        from_cache,
    }))
}

/// Dimension scores of a tree converted to normalized (mean) form; exact,
/// since the literal sum divided by the count is the mean.
pub fn normalized_dim_scores(tree: &ScoreTree) -> BTreeMap<Dimension, f64> {
    match tree.mode {
        ScoreMode::Normalized => tree.dim_scores.clone(),
        ScoreMode::PaperLiteral => tree
            .dim_scores
            .iter()
            .map(|(d, s)| (*d, s / tree.dim_counts[d] as f64))
            .collect(),
    }
}

/// Normalized overall score of a tree under the given weights.
pub fn normalized_overall(tree: &ScoreTree, weights: &BTreeMap<Dimension, f64>) -> Option<f64> {
    overall_score(&normalized_dim_scores(tree), weights, ScoreMode::Normalized)
        .ok()
        .map(|o| o.value)
}

fn build_metrics(
    dataset: &Dataset,
    question_results: &[QuestionResult],
    video_scores: &[VideoScore],
    cfg: &EvalConfig,
) -> Option<MetricsBlock> {
    if dataset.truths.is_empty() {
        return None;
    }
    let question_map: BTreeMap<&str, &EntityQuestion> = dataset
        .questions
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect();
    let result_map: BTreeMap<&str, &QuestionResult> = question_results
        .iter()
        .map(|r| (r.question_id.as_str(), r))
        .collect();

    // Accuracy: questions with a truth but no scored result count as wrong.
    let mut correct: BTreeMap<Dimension, usize> = BTreeMap::new();
    let mut totals: BTreeMap<Dimension, usize> = BTreeMap::new();
    for truth in &dataset.truths {
        let Some(question) = question_map.get(truth.question_id.as_str()) else {
            continue;
        };
        *totals.entry(question.dimension).or_default() += 1;
        let hit = result_map
            .get(truth.question_id.as_str())
            .is_some_and(|r| r.tagged.format_valid && r.tagged.answer == Some(truth.answer));
        if hit {
            *correct.entry(question.dimension).or_default() += 1;
        }
    }

    // Reference scores from ground truth: hard 0/1 entity scores averaged
    // per dimension, then the same weighted overall as predictions.
    let truth_map: BTreeMap<&str, &GroundTruth> = dataset
        .truths
        .iter()
        .map(|t| (t.question_id.as_str(), t))
        .collect();
    let mut dim_pairs: BTreeMap<Dimension, Vec<(String, f64, f64)>> = BTreeMap::new();
    let mut overall_pairs: Vec<(String, f64, f64)> = Vec::new();
    for vs in video_scores {
        let predicted_dims = normalized_dim_scores(&vs.tree);
        let mut reference_sums: BTreeMap<Dimension, (f64, usize)> = BTreeMap::new();
        for question in dataset
            .questions
            .iter()
            .filter(|q| q.video_id == vs.video_id)
        {
            if let Some(truth) = truth_map.get(question.question_id.as_str()) {
                let entry = reference_sums.entry(question.dimension).or_insert((0.0, 0));
                entry.0 += hard_entity_score(truth.answer, question.polarity);
                entry.1 += 1;
            }
        }
        let reference_dims: BTreeMap<Dimension, f64> = reference_sums
            .iter()
            .map(|(d, (sum, n))| (*d, sum / *n as f64))
            .collect();
        for (dim, predicted) in &predicted_dims {
            if let Some(reference) = reference_dims.get(dim) {
                dim_pairs.entry(*dim).or_default().push((
                    vs.video_id.clone(),
                    *predicted,
                    *reference,
                ));
            }
        }
        let predicted_overall = normalized_overall(&vs.tree, &cfg.weights);
        let reference_overall = overall_score(&reference_dims, &cfg.weights, ScoreMode::Normalized)
            .ok()
            .map(|o| o.value);
        if let (Some(p), Some(r)) = (predicted_overall, reference_overall) {
            overall_pairs.push((vs.video_id.clone(), p, r));
        }
    }

    let mut degenerate_flags = Vec::new();
    let mut correlate =
        |label: String, pairs: &[(String, f64, f64)]| -> (Option<f64>, Option<f64>) {
            if pairs.len() < 2 {
                degenerate_flags.push(format!("{label}: fewer than 2 videos"));
                return (None, None);
            }
            let paired = match PairedScores::new(pairs.to_vec()) {
                Ok(p) => p,
                Err(err) => {
                    degenerate_flags.push(format!("{label}: {err}"));
                    return (None, None);
                }
            };
            let s = match srcc(&paired) {
                Ok(v) => Some(v),
                Err(err @ MetricsError::DegenerateVariance(_)) => {
                    degenerate_flags.push(format!("srcc {label}: {err}"));
                    None
                }
                Err(err) => {
                    degenerate_flags.push(format!("srcc {label}: {err}"));
                    None
                }
            };
            let p = match plcc(&paired) {
                Ok(v) => Some(v),
                Err(err) => {
                    degenerate_flags.push(format!("plcc {label}: {err}"));
                    None
                }
            };
            (s, p)
        };

    let mut per_dimension = BTreeMap::new();
    for dim in Dimension::ALL {
        let total = totals.get(&dim).copied().unwrap_or(0);
        if total == 0 && !dim_pairs.contains_key(&dim) {
            continue;
        }
        let accuracy = if total > 0 {
            Some(correct.get(&dim).copied().unwrap_or(0) as f64 / total as f64)
        } else {
            None
        };
        let empty = Vec::new();
        let pairs = dim_pairs.get(&dim).unwrap_or(&empty);
        let (s, p) = correlate(dim.canonical_name().to_string(), pairs);
        per_dimension.insert(
            dim,
            DimensionMetrics {
                n_questions: total,
                accuracy,
                srcc: s,
                plcc: p,
            },
        );
    }
    let total_questions: usize = totals.values().sum();
    let total_correct: usize = correct.values().sum();
    let (overall_srcc, overall_plcc) = correlate("overall".to_string(), &overall_pairs);
    let overall = DimensionMetrics {
        n_questions: total_questions,
        accuracy: if total_questions > 0 {
            Some(total_correct as f64 / total_questions as f64)
        } else {
            None
        },
        srcc: overall_srcc,
        plcc: overall_plcc,
    };

    Some(MetricsBlock {
        per_dimension,
        overall,
        n_videos_correlated: overall_pairs.len(),
        degenerate_flags,
    })
}

/// Offline scoring of pre-recorded responses (`responses.jsonl`) against a
/// question set, no backend involved.
pub struct OfflineScoreOutcome {
    pub video_scores: Vec<VideoScore>,
    pub failures: Vec<FailureEntry>,
}

pub fn score_offline(
    questions: &[EntityQuestion],
    responses: &[ResponseRecord],
    token_sets: &TokenSets,
    weights: &BTreeMap<Dimension, f64>,
    mode: ScoreMode,
    strictness: Strictness,
) -> Result<OfflineScoreOutcome, HarnessError> {
    token_sets.validate()?;
    let words = AnswerWords::from_token_strings(&token_sets.yes_tokens, &token_sets.no_tokens);
    let mut by_id: BTreeMap<&str, &ResponseRecord> = BTreeMap::new();
    for record in responses {
        if by_id.insert(record.question_id.as_str(), record).is_some() {
            return Err(HarnessError::InvalidConfig(format!(
                "duplicate response for question {}",
                record.question_id
            )));
        }
    }

    let mut failures = Vec::new();
    let mut per_video: BTreeMap<&str, Vec<(usize, QuestionResult)>> = BTreeMap::new();
    for (index, question) in questions.iter().enumerate() {
        let Some(record) = by_id.get(question.question_id.as_str()) else {
            failures.push(FailureEntry {
                question_id: question.question_id.clone(),
                video_id: question.video_id.clone(),
                stage: FailureStage::Dataset,
                error: "no response recorded for this question".to_string(),
            });
            continue;
        };
        let tagged = parse_tagged_with(&record.raw_text, strictness, &words);
        let logits = match record.to_answer_logits() {
            Ok(lg) => lg,
            Err(err) => {
                failures.push(FailureEntry {
                    question_id: question.question_id.clone(),
                    video_id: question.video_id.clone(),
                    stage: FailureStage::Score,
                    error: err.to_string(),
                });
                continue;
            }
        };
        let distribution = logits
            .as_ref()
            .and_then(|lg| restricted_softmax(lg, token_sets).ok());
        if distribution.is_none() && tagged.answer.is_none() {
            failures.push(FailureEntry {
                question_id: question.question_id.clone(),
                video_id: question.video_id.clone(),
                stage: FailureStage::Score,
                error: "response yields neither an answer distribution nor a parsed answer"
                    .to_string(),
            });
            continue;
        }
        per_video
            .entry(question.video_id.as_str())
            .or_default()
            .push((
                index,
                QuestionResult {
                    question_id: question.question_id.clone(),
                    video_id: question.video_id.clone(),
                    dimension: question.dimension,
                    tagged,
                    distribution,
                    logits,
                    from_cache: false,
                },
            ));
    }

    let question_map: BTreeMap<&str, &EntityQuestion> = questions
        .iter()
        .map(|q| (q.question_id.as_str(), q))
        .collect();
    let mut video_order: Vec<&str> = Vec::new();
    for question in questions {
        if !video_order.contains(&question.video_id.as_str()) {
            video_order.push(question.video_id.as_str());
        }
    }
    let mut video_scores = Vec::new();
    for video_id in video_order {
        let Some(results) = per_video.get(video_id) else {
            continue;
        };
        let prob_mode = results.iter().all(|(_, r)| r.distribution.is_some());
        let mut responses_for_tree = Vec::new();
        for (_, result) in results {
            if !prob_mode && result.tagged.answer.is_none() {
                failures.push(FailureEntry {
                    question_id: result.question_id.clone(),
                    video_id: result.video_id.clone(),
                    stage: FailureStage::Score,
                    error: "no parsed answer for hard scoring".to_string(),
                });
                continue;
            }
            responses_for_tree.push(QuestionResponse {
                question: (*question_map[result.question_id.as_str()]).clone(),
                logits: result.logits.clone(),
                tagged: Some(result.tagged.clone()),
            });
        }
        if responses_for_tree.is_empty() {
            continue;
        }
        match score_video(&responses_for_tree, token_sets, weights, mode, prob_mode) {
            Ok(tree) => video_scores.push(VideoScore {
                video_id: video_id.to_string(),
                prob_mode,
                tree,
            }),
            Err(err) => {
                let message = err.to_string();
                for response in &responses_for_tree {
                    failures.push(FailureEntry {
                        question_id: response.question.question_id.clone(),
                        video_id: response.question.video_id.clone(),
                        stage: FailureStage::Score,
                        error: message.clone(),
                    });
                }
            }
        }
    }
    Ok(OfflineScoreOutcome {
        video_scores,
        failures,
    })
}
