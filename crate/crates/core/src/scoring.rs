//! Hierarchical scoring: restricted softmax over the yes/no token sets,
//! polarity-aware entity scores, per-dimension aggregation, and the weighted
//! overall score.
//!
//! All operations are pure; score assembly is order-independent.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse::{Answer, TaggedResponse};
use crate::qgen::{Dimension, EntityQuestion, Polarity};

/// The token surface forms counted as "Yes" and "No" answers.
///
/// Membership is exact string equality on the token text as returned by the
/// backend, so tokenizer variants such as `" Yes"` (leading space) and
/// `"\"Yes"` are listed explicitly. Sets are disjoint and non-empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenSets {
    pub yes_tokens: Vec<String>,
    pub no_tokens: Vec<String>,
}

impl Default for TokenSets {
    fn default() -> Self {
        Self {
            yes_tokens: ["Yes", "yes", "YES", "\"Yes", " Yes"]
                .map(String::from)
                .to_vec(),
            no_tokens: ["No", "no", "NO", "\"No", " No"].map(String::from).to_vec(),
        }
    }
}

impl TokenSets {
    pub fn new(yes_tokens: Vec<String>, no_tokens: Vec<String>) -> Result<Self, ScoreError> {
        let sets = Self {
            yes_tokens,
            no_tokens,
        };
        sets.validate()?;
        Ok(sets)
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.yes_tokens.is_empty() || self.no_tokens.is_empty() {
            return Err(ScoreError::InvalidTokenSets(
                "both token sets must be non-empty".into(),
            ));
        }
        let yes: BTreeSet<&str> = self.yes_tokens.iter().map(String::as_str).collect();
        let no: BTreeSet<&str> = self.no_tokens.iter().map(String::as_str).collect();
        if let Some(shared) = yes.intersection(&no).next() {
            return Err(ScoreError::InvalidTokenSets(format!(
                "token {shared:?} appears in both sets"
            )));
        }
        Ok(())
    }

    fn classify(&self, token: &str) -> Option<Answer> {
        if self.yes_tokens.iter().any(|t| t == token) {
            Some(Answer::Yes)
        } else if self.no_tokens.iter().any(|t| t == token) {
            Some(Answer::No)
        } else {
            None
        }
    }
}

/// Whether logit values are raw logits or log-probabilities over the full
/// vocabulary. The restricted softmax is shift-invariant, so both kinds
/// yield the same distribution for the same relative values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitKind {
    RawLogit,
    FullVocabLogprob,
}

/// Logit values observed at the answer position of one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerLogits {
    pub kind: LogitKind,
    /// `(token, value)` pairs; token strings are unique.
    pub entries: Vec<(String, f64)>,
    /// Provenance: which question and which generated-token index.
    pub question_id: String,
    pub token_index: usize,
}

impl AnswerLogits {
    pub fn new(kind: LogitKind, entries: Vec<(String, f64)>) -> Result<Self, ScoreError> {
        let mut seen = BTreeSet::new();
        for (token, _) in &entries {
            if !seen.insert(token.as_str()) {
                return Err(ScoreError::DuplicateLogitToken(token.clone()));
            }
        }
        Ok(Self {
            kind,
            entries,
            question_id: String::new(),
            token_index: 0,
        })
    }

    pub fn with_position(mut self, question_id: impl Into<String>, token_index: usize) -> Self {
        self.question_id = question_id.into();
        self.token_index = token_index;
        self
    }
}

/// Probability mass restricted to the yes/no token sets at the answer
/// position. `p_yes + p_no` is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub p_yes: f64,
    pub p_no: f64,
    /// How many token-set members were present in the provided logits.
    pub coverage: usize,
}

/// Human-annotated reference answer for one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub question_id: String,
    pub answer: Answer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Sum per dimension exactly as defined, or the mean. Sums conflate quality
/// with question count, so cross-video comparisons must use `Normalized`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    PaperLiteral,
    Normalized,
}

/// Entity, dimension, and overall scores for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTree {
    pub entity_scores: BTreeMap<String, f64>,
    pub dim_scores: BTreeMap<Dimension, f64>,
    pub dim_counts: BTreeMap<Dimension, usize>,
    pub overall: f64,
    pub weights: BTreeMap<Dimension, f64>,
    pub mode: ScoreMode,
    /// Set when the overall score was renormalized over a subset of
    /// dimensions because some dimension had no questions.
    pub partial: bool,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no token-set members found at the answer position")]
    NoAnswerTokens,
    #[error("invalid token sets: {0}")]
    InvalidTokenSets(String),
    #[error("duplicate token {0:?} in answer logits")]
    DuplicateLogitToken(String),
    #[error("mixed logit kinds in one answer-logits set")]
    MixedLogitKinds,
    #[error("dimension has no entity scores")]
    EmptyDimension,
    #[error("weights sum to {0}, expected 1 within 1e-9")]
    WeightSumInvalid(f64),
    #[error("no weight configured for dimension {0}")]
    MissingWeight(Dimension),
    #[error("dimension {0} has no score (required in paper-literal mode)")]
    MissingDimension(Dimension),
    #[error("no responses to score for this video")]
    EmptyVideo,
    #[error("duplicate question id {0}")]
    DuplicateQuestion(String),
    #[error("question {0}: probability scoring requires answer logits")]
    MissingLogits(String),
    #[error("question {0}: hard scoring requires a parsed answer")]
    MissingAnswer(String),
    #[error("question {question_id}: {source}")]
    Question {
        question_id: String,
        #[source]
        source: Box<ScoreError>,
    },
    #[error("prediction/truth id mismatch: {0}")]
    IdMismatch(String),
}

/// Softmax over exactly the token-set members present in the logits, summed
/// per set. Absent members contribute zero mass.
///
/// Numerically stabilized by max-subtraction; invariant under adding a
/// constant to all values.
pub fn restricted_softmax(
    logits: &AnswerLogits,
    sets: &TokenSets,
) -> Result<AnswerDistribution, ScoreError> {
    sets.validate()?;
    let found: Vec<(Answer, f64)> = logits
        .entries
        .iter()
        .filter_map(|(token, value)| sets.classify(token).map(|side| (side, *value)))
        .collect();
    if found.is_empty() {
        return Err(ScoreError::NoAnswerTokens);
    }
    let max = found
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut yes_mass = 0.0;
    let mut total = 0.0;
    for (side, value) in &found {
        let w = (value - max).exp();
        total += w;
        if *side == Answer::Yes {
            yes_mass += w;
        }
    }
    let p_yes = yes_mass / total;
    Ok(AnswerDistribution {
        p_yes,
        p_no: 1.0 - p_yes,
        coverage: found.len(),
    })
}

/// Entity-level score: the probability of the answer that correlates
/// positively with video quality.
pub fn entity_score(dist: &AnswerDistribution, polarity: Polarity) -> f64 {
    match polarity {
        Polarity::Positive => dist.p_yes,
        Polarity::Negative => dist.p_no,
    }
}

/// Entity-level score from a hard parsed answer: 1 when the answer points
/// in the quality-positive direction, else 0.
pub fn hard_entity_score(answer: Answer, polarity: Polarity) -> f64 {
    match (answer, polarity) {
        (Answer::Yes, Polarity::Positive) | (Answer::No, Polarity::Negative) => 1.0,
        _ => 0.0,
    }
}

/// Aggregates entity scores within one dimension: the raw sum in
/// paper-literal mode, the mean in normalized mode.
///
/// The normalized value is exactly the paper-literal sum divided by the
/// count.
pub fn dimension_score(entity_scores: &[f64], mode: ScoreMode) -> Result<f64, ScoreError> {
    if entity_scores.is_empty() {
        return Err(ScoreError::EmptyDimension);
    }
    let sum: f64 = entity_scores.iter().sum();
    Ok(match mode {
        ScoreMode::PaperLiteral => sum,
        ScoreMode::Normalized => sum / entity_scores.len() as f64,
    })
}

/// Weighted overall score over the five dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverallScore {
    pub value: f64,
    pub partial: bool,
}

/// Combines dimension scores with weights that must sum to 1 within 1e-9.
///
/// In normalized mode a missing dimension renormalizes the weights over the
/// present ones and marks the result partial; paper-literal mode rejects
/// missing dimensions.
pub fn overall_score(
    dim_scores: &BTreeMap<Dimension, f64>,
    weights: &BTreeMap<Dimension, f64>,
    mode: ScoreMode,
) -> Result<OverallScore, ScoreError> {
    let weight_sum: f64 = weights.values().sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(ScoreError::WeightSumInvalid(weight_sum));
    }
    for dim in dim_scores.keys() {
        if !weights.contains_key(dim) {
            return Err(ScoreError::MissingWeight(*dim));
        }
    }
    let missing: Vec<Dimension> = weights
        .keys()
        .filter(|d| !dim_scores.contains_key(d))
        .copied()
        .collect();
    if missing.is_empty() {
        let value = dim_scores.iter().map(|(d, s)| weights[d] * s).sum();
        return Ok(OverallScore {
            value,
            partial: false,
        });
    }
    if mode == ScoreMode::PaperLiteral {
        return Err(ScoreError::MissingDimension(missing[0]));
    }
    let present_weight: f64 = dim_scores.keys().map(|d| weights[d]).sum();
    if present_weight <= 0.0 {
        return Err(ScoreError::EmptyVideo);
    }
    let value = dim_scores.iter().map(|(d, s)| weights[d] * s).sum::<f64>() / present_weight;
    Ok(OverallScore {
        value,
        partial: true,
    })
}

/// Uniform weights over the five dimensions (0.2 each), the default.
pub fn uniform_weights() -> BTreeMap<Dimension, f64> {
    Dimension::ALL.into_iter().map(|d| (d, 0.2)).collect()
}

/// Evidence for one question: answer-position logits, a parsed response,
/// or both.
#[derive(Debug, Clone)]
pub struct QuestionResponse {
    pub question: EntityQuestion,
    pub logits: Option<AnswerLogits>,
    pub tagged: Option<TaggedResponse>,
}

/// Builds the full score tree for one video.
///
/// With `prob_mode` the entity score is the restricted-softmax probability;
/// otherwise it is the hard 0/1 score from the parsed answer.
pub fn score_video(
    responses: &[QuestionResponse],
    sets: &TokenSets,
    weights: &BTreeMap<Dimension, f64>,
    mode: ScoreMode,
    prob_mode: bool,
) -> Result<ScoreTree, ScoreError> {
    if responses.is_empty() {
        return Err(ScoreError::EmptyVideo);
    }
    let mut entity_scores: BTreeMap<String, f64> = BTreeMap::new();
    let mut per_dim: BTreeMap<Dimension, Vec<f64>> = BTreeMap::new();
    for response in responses {
        let qid = response.question.question_id.clone();
        if entity_scores.contains_key(&qid) {
            return Err(ScoreError::DuplicateQuestion(qid));
        }
        let score = question_entity_score(response, sets, prob_mode).map_err(|source| {
            ScoreError::Question {
                question_id: qid.clone(),
                source: Box::new(source),
            }
        })?;
        per_dim
            .entry(response.question.dimension)
            .or_default()
            .push(score);
        entity_scores.insert(qid, score);
    }
    let mut dim_scores = BTreeMap::new();
    let mut dim_counts = BTreeMap::new();
    for (dim, scores) in &per_dim {
        dim_scores.insert(*dim, dimension_score(scores, mode)?);
        dim_counts.insert(*dim, scores.len());
    }
    let overall = overall_score(&dim_scores, weights, mode)?;
    Ok(ScoreTree {
        entity_scores,
        dim_scores,
        dim_counts,
        overall: overall.value,
        weights: weights.clone(),
        mode,
        partial: overall.partial,
    })
}

fn question_entity_score(
    response: &QuestionResponse,
    sets: &TokenSets,
    prob_mode: bool,
) -> Result<f64, ScoreError> {
    let polarity = response.question.polarity;
    if prob_mode {
        let logits = response
            .logits
            .as_ref()
            .ok_or_else(|| ScoreError::MissingLogits(response.question.question_id.clone()))?;
        let dist = restricted_softmax(logits, sets)?;
        Ok(entity_score(&dist, polarity))
    } else {
        let answer = response
            .tagged
            .as_ref()
            .and_then(|t| t.answer)
            .ok_or_else(|| ScoreError::MissingAnswer(response.question.question_id.clone()))?;
        Ok(hard_entity_score(answer, polarity))
    }
}

/// Exact-match fraction of predicted answers against ground truth, aligned
/// by question id. Invalid-format predictions count as wrong.
pub fn answer_accuracy(
    predictions: &[(String, TaggedResponse)],
    truths: &[GroundTruth],
) -> Result<f64, ScoreError> {
    if truths.is_empty() {
        return Err(ScoreError::IdMismatch("no ground truth provided".into()));
    }
    let mut by_id: BTreeMap<&str, &TaggedResponse> = BTreeMap::new();
    for (qid, response) in predictions {
        if by_id.insert(qid.as_str(), response).is_some() {
            return Err(ScoreError::IdMismatch(format!(
                "duplicate prediction for question {qid}"
            )));
        }
    }
    if by_id.len() != truths.len() {
        return Err(ScoreError::IdMismatch(format!(
            "{} predictions vs {} truths",
            by_id.len(),
            truths.len()
        )));
    }
    let mut correct = 0usize;
    for truth in truths {
        let response = by_id.remove(truth.question_id.as_str()).ok_or_else(|| {
            ScoreError::IdMismatch(format!("no prediction for question {}", truth.question_id))
        })?;
        if response.format_valid && response.answer == Some(truth.answer) {
            correct += 1;
        }
    }
    Ok(correct as f64 / truths.len() as f64)
}

/// Wire form of one `responses.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub schema_version: u32,
    pub question_id: String,
    pub raw_text: String,
    #[serde(default)]
    pub answer_logits: Vec<LogitEntryRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogitEntryRecord {
    pub token: String,
    pub value: f64,
    pub kind: LogitKind,
}

impl ResponseRecord {
    /// Converts the per-entry wire form into [`AnswerLogits`], enforcing the
    /// single-kind invariant. Empty logits yield `None`.
    pub fn to_answer_logits(&self) -> Result<Option<AnswerLogits>, ScoreError> {
        if self.answer_logits.is_empty() {
            return Ok(None);
        }
        let kind = self.answer_logits[0].kind;
        if self.answer_logits.iter().any(|e| e.kind != kind) {
            return Err(ScoreError::MixedLogitKinds);
        }
        let entries = self
            .answer_logits
            .iter()
            .map(|e| (e.token.clone(), e.value))
            .collect();
        Ok(Some(
            AnswerLogits::new(kind, entries)?.with_position(self.question_id.clone(), 0),
        ))
    }
}
