//! Entity-level question generation: extracts entities from a text-to-video
//! prompt through an LLM endpoint, then generates polarity-tagged yes/no
//! questions for each entity under each of the five assessment dimensions.

mod client;
mod templates;

pub use client::{
    complete_with_retry, ClientError, FileMockLlmClient, HttpLlmClient, LlmClient, LlmExchange,
    LlmRequest, LlmResponse, RetryPolicy, ScriptedLlmClient,
};
pub use templates::{dimension_explanation, render_template, IclExampleSet, TemplateSet};

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::run_indexed;

/// The five assessment dimensions. The set is closed and the serialized
/// names are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    VisualQuality,
    TextAlignment,
    TemporalConsistency,
    FactualConsistency,
    DynamicDegree,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::VisualQuality,
        Dimension::TextAlignment,
        Dimension::TemporalConsistency,
        Dimension::FactualConsistency,
        Dimension::DynamicDegree,
    ];

    pub fn canonical_name(&self) -> &'static str {
        match self {
            Dimension::VisualQuality => "visual_quality",
            Dimension::TextAlignment => "text_alignment",
            Dimension::TemporalConsistency => "temporal_consistency",
            Dimension::FactualConsistency => "factual_consistency",
            Dimension::DynamicDegree => "dynamic_degree",
        }
    }

    /// Human-readable label used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            Dimension::VisualQuality => "Visual Quality",
            Dimension::TextAlignment => "Text Alignment",
            Dimension::TemporalConsistency => "Temporal",
            Dimension::FactualConsistency => "Factual",
            Dimension::DynamicDegree => "Dynamic Degree",
        }
    }
}

impl std::fmt::Display for Dimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl std::str::FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.canonical_name() == s)
            .ok_or_else(|| format!("unknown dimension: {s}"))
    }
}

/// Whether a "Yes" answer to the question indicates higher (positive) or
/// lower (negative) video quality. Serialized as 1 / 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn as_u8(&self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }
}

impl Serialize for Polarity {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match u8::deserialize(deserializer)? {
            0 => Ok(Polarity::Negative),
            1 => Ok(Polarity::Positive),
            other => Err(serde::de::Error::custom(format!(
                "polarity must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// A text-to-video generation prompt, the sole instruction the generator saw.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserPrompt {
    pub prompt_id: String,
    pub text: String,
}

impl UserPrompt {
    pub fn new(prompt_id: impl Into<String>, text: impl Into<String>) -> Result<Self, QgenError> {
        let prompt_id = prompt_id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(QgenError::EmptyPrompt(prompt_id));
        }
        Ok(Self { prompt_id, text })
    }
}

/// An entity extracted from a user prompt.
///
/// `inferred` marks names that do not occur verbatim (case-insensitively)
/// in the prompt text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    #[serde(default)]
    pub actions: Vec<String>,
    pub source_prompt: String,
    #[serde(default)]
    pub inferred: bool,
}

/// One polarity-tagged yes/no question about one entity under one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityQuestion {
    pub question_id: String,
    pub video_id: String,
    pub dimension: Dimension,
    pub entity: Entity,
    pub text: String,
    pub polarity: Polarity,
    #[serde(default)]
    pub polarity_defaulted: bool,
}

/// Wire form of one `prompts.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRecord {
    #[serde(default)]
    pub schema_version: u32,
    pub prompt_id: String,
    pub text: String,
}

/// Wire form of one `questions.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub schema_version: u32,
    pub question_id: String,
    pub video_id: String,
    pub dimension: Dimension,
    pub entity: Entity,
    pub text: String,
    pub polarity: Polarity,
    pub polarity_defaulted: bool,
}

pub const QUESTIONS_SCHEMA_VERSION: u32 = 1;

impl From<&EntityQuestion> for QuestionRecord {
    fn from(q: &EntityQuestion) -> Self {
        QuestionRecord {
            schema_version: QUESTIONS_SCHEMA_VERSION,
            question_id: q.question_id.clone(),
            video_id: q.video_id.clone(),
            dimension: q.dimension,
            entity: q.entity.clone(),
            text: q.text.clone(),
            polarity: q.polarity,
            polarity_defaulted: q.polarity_defaulted,
        }
    }
}

impl From<QuestionRecord> for EntityQuestion {
    fn from(r: QuestionRecord) -> Self {
        EntityQuestion {
            question_id: r.question_id,
            video_id: r.video_id,
            dimension: r.dimension,
            entity: r.entity,
            text: r.text,
            polarity: r.polarity,
            polarity_defaulted: r.polarity_defaulted,
        }
    }
}

#[derive(Debug, Error)]
pub enum QgenError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("prompt {0} is empty after trimming")]
    EmptyPrompt(String),
    #[error("malformed entity line {line_no}: {line:?}")]
    MalformedEntityLine { line_no: usize, line: String },
    #[error("no ICL examples configured for {0}")]
    MissingIclExamples(String),
    #[error("question extraction matched zero lines")]
    ExtractionEmpty,
    #[error(transparent)]
    Sink(#[from] SinkError),
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("question sink write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything the generation operations need besides their per-call inputs.
pub struct QgenContext<'a> {
    pub client: &'a dyn LlmClient,
    pub icl: &'a IclExampleSet,
    pub templates: &'a TemplateSet,
    pub retry: RetryPolicy,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl<'a> QgenContext<'a> {
    pub fn new(
        client: &'a dyn LlmClient,
        icl: &'a IclExampleSet,
        templates: &'a TemplateSet,
    ) -> Self {
        Self {
            client,
            icl,
            templates,
            retry: RetryPolicy::default(),
            max_tokens: 512,
            temperature: 0.0,
        }
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

/// Extracts entities from a user prompt via the LLM endpoint.
///
/// An LLM response with no `ENTITY:` lines yields an empty list; callers
/// record a warning and continue.
pub fn extract_entities(prompt: &UserPrompt, ctx: &QgenContext) -> Result<Vec<Entity>, QgenError> {
    if prompt.text.trim().is_empty() {
        return Err(QgenError::EmptyPrompt(prompt.prompt_id.clone()));
    }
    if ctx.icl.extraction.is_empty() {
        return Err(QgenError::MissingIclExamples("extraction".to_string()));
    }
    let rendered = render_template(
        &ctx.templates.extraction,
        &[
            ("icl_examples", ctx.icl.extraction_block().as_str()),
            ("prompt", prompt.text.as_str()),
        ],
    );
    let req = LlmRequest {
        template_id: ctx.templates.extraction_id.clone(),
        rendered_prompt: rendered,
        max_tokens: ctx.max_tokens,
        temperature: ctx.temperature,
    };
    let (resp, _exchange) = complete_with_retry(ctx.client, &req, ctx.retry)?;
    parse_entity_lines(&resp.text, prompt)
}

/// Parses the `ENTITY: name | attributes: … | actions: …` line grammar.
pub fn parse_entity_lines(text: &str, prompt: &UserPrompt) -> Result<Vec<Entity>, QgenError> {
    let prompt_lower = prompt.text.to_lowercase();
    let mut entities = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        let Some(rest) = line.strip_prefix("ENTITY:") else {
            continue;
        };
        let malformed = || QgenError::MalformedEntityLine {
            line_no: idx + 1,
            line: raw_line.to_string(),
        };
        let mut segments = rest.split('|');
        let name = segments.next().unwrap_or("").trim().to_string();
        if name.is_empty() {
            return Err(malformed());
        }
        let mut attributes = Vec::new();
        let mut actions = Vec::new();
        for segment in segments {
            let segment = segment.trim();
            if let Some(items) = segment.strip_prefix("attributes:") {
                attributes = split_items(items);
            } else if let Some(items) = segment.strip_prefix("actions:") {
                actions = split_items(items);
            } else {
                return Err(malformed());
            }
        }
        let inferred = !prompt_lower.contains(&name.to_lowercase());
        entities.push(Entity {
            name,
            attributes,
            actions,
            source_prompt: prompt.prompt_id.clone(),
            inferred,
        });
    }
    Ok(entities)
}

fn split_items(raw: &str) -> Vec<String> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// One line matched by the question pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionLine {
    pub text: String,
    pub marker: Option<Polarity>,
}

fn question_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^Q\d+:\s*(.+?)\s*$").expect("question pattern compiles"))
}

/// Pattern-matching extraction of question lines from a raw LLM response.
/// Lines that do not match `Q<k>: <text> [POS|NEG]` are discarded. The
/// polarity marker is split off before the line pattern is applied, so a
/// marker with no question text does not match.
pub fn extract_question_lines(text: &str) -> Vec<QuestionLine> {
    let re = question_pattern();
    let mut out = Vec::new();
    for raw_line in text.lines() {
        let mut line = raw_line.trim();
        let mut marker = None;
        if let Some(stripped) = line.strip_suffix("[POS]") {
            marker = Some(Polarity::Positive);
            line = stripped.trim_end();
        } else if let Some(stripped) = line.strip_suffix("[NEG]") {
            marker = Some(Polarity::Negative);
            line = stripped.trim_end();
        }
        let Some(caps) = re.captures(line) else {
            continue;
        };
        out.push(QuestionLine {
            text: caps[1].to_string(),
            marker,
        });
    }
    out
}

/// Generates entity-level questions for one entity under one dimension.
///
/// Polarity comes from the `[POS]`/`[NEG]` marker; a missing marker defaults
/// to positive and sets `polarity_defaulted` so the guess stays auditable.
pub fn generate_questions(
    entity: &Entity,
    dimension: Dimension,
    prompt: &UserPrompt,
    ctx: &QgenContext,
) -> Result<Vec<EntityQuestion>, QgenError> {
    let icl_block = ctx
        .icl
        .dimension_block(dimension)
        .ok_or_else(|| QgenError::MissingIclExamples(dimension.to_string()))?;
    let entity_desc = describe_entity(entity);
    let rendered = render_template(
        &ctx.templates.question,
        &[
            ("dimension", dimension.canonical_name()),
            ("dimension_explanation", dimension_explanation(dimension)),
            ("icl_examples", icl_block.as_str()),
            ("prompt", prompt.text.as_str()),
            ("entity", entity_desc.as_str()),
        ],
    );
    let req = LlmRequest {
        template_id: ctx.templates.question_id.clone(),
        rendered_prompt: rendered,
        max_tokens: ctx.max_tokens,
        temperature: ctx.temperature,
    };
    let (resp, _exchange) = complete_with_retry(ctx.client, &req, ctx.retry)?;
    let lines = extract_question_lines(&resp.text);
    if lines.is_empty() {
        return Err(QgenError::ExtractionEmpty);
    }
    let slug = slugify(&entity.name);
    Ok(lines
        .into_iter()
        .enumerate()
        .map(|(i, line)| EntityQuestion {
            question_id: format!(
                "{}:{}:{}:q{}",
                prompt.prompt_id,
                slug,
                dimension.canonical_name(),
                i + 1
            ),
            video_id: prompt.prompt_id.clone(),
            dimension,
            entity: entity.clone(),
            text: line.text,
            polarity: line.marker.unwrap_or(Polarity::Positive),
            polarity_defaulted: line.marker.is_none(),
        })
        .collect())
}

fn describe_entity(entity: &Entity) -> String {
    let mut out = entity.name.clone();
    if !entity.attributes.is_empty() {
        out.push_str(&format!(" (attributes: {})", entity.attributes.join(", ")));
    }
    if !entity.actions.is_empty() {
        out.push_str(&format!(" (actions: {})", entity.actions.join(", ")));
    }
    out
}

fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut last_dash = false;
    for c in name.to_lowercase().chars() {
        if c.is_alphanumeric() {
            out.push(c);
            last_dash = false;
        } else if !last_dash && !out.is_empty() {
            out.push('-');
            last_dash = true;
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

/// Receives generated questions; implementations serialize writes.
pub trait QuestionSink {
    fn write_question(&mut self, question: &EntityQuestion) -> Result<(), SinkError>;
}

/// Writes one JSON object per question, the `questions.jsonl` format.
pub struct JsonlQuestionSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlQuestionSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl JsonlQuestionSink<std::io::BufWriter<std::fs::File>> {
    pub fn create(path: impl AsRef<std::path::Path>) -> Result<Self, SinkError> {
        let file = std::fs::File::create(path)?;
        Ok(Self::new(std::io::BufWriter::new(file)))
    }
}

impl<W: Write> QuestionSink for JsonlQuestionSink<W> {
    fn write_question(&mut self, question: &EntityQuestion) -> Result<(), SinkError> {
        let record = QuestionRecord::from(question);
        serde_json::to_writer(&mut self.out, &record)
            .map_err(|e| SinkError::Io(std::io::Error::other(e)))?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// One failed (prompt × entity × dimension) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QgenCellFailure {
    pub prompt_id: String,
    pub entity: Option<String>,
    pub dimension: Option<Dimension>,
    pub error: String,
}

/// Batch outcome: what was produced and everything that failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QgenReport {
    pub schema_version: u32,
    pub prompts_total: usize,
    pub entities_total: usize,
    pub cells_total: usize,
    pub cells_failed: usize,
    pub questions_written: usize,
    pub polarity_defaulted: usize,
    pub warnings: Vec<String>,
    pub failures: Vec<QgenCellFailure>,
}

#[derive(Debug, Clone, Copy)]
pub struct QgenBatchOptions {
    pub parallelism: usize,
}

impl Default for QgenBatchOptions {
    fn default() -> Self {
        Self { parallelism: 1 }
    }
}

struct PromptOutcome {
    questions: Vec<EntityQuestion>,
    failures: Vec<QgenCellFailure>,
    warnings: Vec<String>,
    entities: usize,
    cells: usize,
}

/// Runs extraction and question generation over a batch of prompts.
///
/// Every (prompt × entity × dimension) cell either contributes questions or
/// appears in the report's failure list. Output order is deterministic:
/// prompts in input order, entities in extraction order, dimensions in
/// canonical order.
pub fn run_qgen_batch(
    prompts: &[UserPrompt],
    ctx: &QgenContext,
    sink: &mut dyn QuestionSink,
    opts: &QgenBatchOptions,
) -> Result<QgenReport, QgenError> {
    let outcomes = run_indexed(prompts, opts.parallelism.max(1), |_, prompt| {
        process_prompt(prompt, ctx)
    });

    let mut report = QgenReport {
        schema_version: QUESTIONS_SCHEMA_VERSION,
        prompts_total: prompts.len(),
        entities_total: 0,
        cells_total: 0,
        cells_failed: 0,
        questions_written: 0,
        polarity_defaulted: 0,
        warnings: Vec::new(),
        failures: Vec::new(),
    };
    let mut seen_ids: BTreeSet<(String, String)> = BTreeSet::new();
    for outcome in outcomes {
        report.entities_total += outcome.entities;
        report.cells_total += outcome.cells;
        report.cells_failed += outcome.failures.len();
        report.warnings.extend(outcome.warnings);
        report.failures.extend(outcome.failures);
        for question in outcome.questions {
            let key = (question.video_id.clone(), question.question_id.clone());
            if !seen_ids.insert(key) {
                report.warnings.push(format!(
                    "duplicate question id skipped: {}",
                    question.question_id
                ));
                continue;
            }
            sink.write_question(&question)?;
            if question.polarity_defaulted {
                report.polarity_defaulted += 1;
            }
            report.questions_written += 1;
        }
    }
    Ok(report)
}

fn process_prompt(prompt: &UserPrompt, ctx: &QgenContext) -> PromptOutcome {
    let mut outcome = PromptOutcome {
        questions: Vec::new(),
        failures: Vec::new(),
        warnings: Vec::new(),
        entities: 0,
        cells: 0,
    };
    let entities = match extract_entities(prompt, ctx) {
        Ok(entities) => entities,
        Err(err) => {
            outcome.cells = 1;
            outcome.failures.push(QgenCellFailure {
                prompt_id: prompt.prompt_id.clone(),
                entity: None,
                dimension: None,
                error: err.to_string(),
            });
            return outcome;
        }
    };
    if entities.is_empty() {
        outcome.warnings.push(format!(
            "prompt {}: no entities extracted",
            prompt.prompt_id
        ));
        return outcome;
    }
    let mut unique: Vec<Entity> = Vec::new();
    for entity in entities {
        if unique
            .iter()
            .any(|e| e.name.eq_ignore_ascii_case(&entity.name))
        {
            outcome.warnings.push(format!(
                "prompt {}: duplicate entity {:?} merged",
                prompt.prompt_id, entity.name
            ));
            continue;
        }
        unique.push(entity);
    }
    outcome.entities = unique.len();
    for entity in &unique {
        for dimension in Dimension::ALL {
            outcome.cells += 1;
            match generate_questions(entity, dimension, prompt, ctx) {
                Ok(questions) => outcome.questions.extend(questions),
                Err(err) => outcome.failures.push(QgenCellFailure {
                    prompt_id: prompt.prompt_id.clone(),
                    entity: Some(entity.name.clone()),
                    dimension: Some(dimension),
                    error: err.to_string(),
                }),
            }
        }
    }
    outcome
}
