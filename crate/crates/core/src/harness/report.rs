//! Report emission: a JSON document with full run contents and a markdown
//! summary laid out as per-dimension Acc/SRCC/PLCC rows plus per-video
//! score tables. Cross-video tables always use normalized dimension
//! scores, whatever mode the run itself used.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{
    normalized_dim_scores, normalized_overall, DimensionMetrics, EvalRun, VideoScore,
};
use super::HarnessError;
use crate::qgen::Dimension;
use crate::scoring::ScoreMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Markdown,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    /// Wall-clock stamp; excluded when comparing reports for determinism.
    generated_at_ms: u128,
    run: &'a EvalRun,
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `report.json` or `report.md` into `out_dir`, returning the path.
pub fn emit_report(
    run: &EvalRun,
    format: ReportFormat,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf, HarnessError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    match format {
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            let document = ReportDocument {
                generated_at_ms: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_millis())
                    .unwrap_or(0),
                run,
            };
            let mut text = serde_json::to_string_pretty(&document)
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
            text.push('\n');
            write_file(&path, &text)?;
            Ok(path)
        }
        ReportFormat::Markdown => {
            let path = out_dir.join("report.md");
            write_file(&path, &render_markdown(run))?;
            Ok(path)
        }
    }
}

/// One `scores.jsonl` line: a flattened score tree with provenance.
#[derive(Serialize, serde::Deserialize, Debug, Clone)]
pub struct ScoreRecord {
    pub schema_version: u32,
    pub video_id: String,
    pub prob_mode: bool,
    pub mode: ScoreMode,
    pub partial: bool,
    pub weights: std::collections::BTreeMap<Dimension, f64>,
    pub dim_scores: std::collections::BTreeMap<Dimension, f64>,
    pub dim_counts: std::collections::BTreeMap<Dimension, usize>,
    pub entity_scores: std::collections::BTreeMap<String, f64>,
    pub overall: f64,
}

impl From<&VideoScore> for ScoreRecord {
    fn from(vs: &VideoScore) -> Self {
        ScoreRecord {
            schema_version: super::run::RUN_SCHEMA_VERSION,
            video_id: vs.video_id.clone(),
            prob_mode: vs.prob_mode,
            mode: vs.tree.mode,
            partial: vs.tree.partial,
            weights: vs.tree.weights.clone(),
            dim_scores: vs.tree.dim_scores.clone(),
            dim_counts: vs.tree.dim_counts.clone(),
            entity_scores: vs.tree.entity_scores.clone(),
            overall: vs.tree.overall,
        }
    }
}

/// Writes one flattened score tree per video.
pub fn write_scores_jsonl(
    video_scores: &[VideoScore],
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let mut out = String::new();
    for vs in video_scores {
        let record = ScoreRecord::from(vs);
        out.push_str(
            &serde_json::to_string(&record)
                .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?,
        );
        out.push('\n');
    }
    write_file(path.as_ref(), &out)
}

fn fmt_metric(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.2}", v * 100.0),
        None => "-".to_string(),
    }
}

fn metrics_row(label: &str, m: &DimensionMetrics) -> String {
    format!(
        "| {label} | {} | {} | {} | {} |\n",
        m.n_questions,
        fmt_metric(m.accuracy),
        fmt_metric(m.srcc),
        fmt_metric(m.plcc),
    )
}

fn render_markdown(run: &EvalRun) -> String {
    let mut md = String::new();
    md.push_str(&format!("# Evaluation report: {}\n\n", run.run_id));
    md.push_str(&format!(
        "- backend: `{}`\n- mode: {} / strictness: {}\n- questions scored: {} / failed: {}\n- config hash: `{}`\n\n",
        run.config.backend_id,
        match run.config.mode {
            ScoreMode::Normalized => "normalized",
            ScoreMode::PaperLiteral => "paper-literal",
        },
        match run.config.strictness {
            crate::parse::Strictness::Strict => "strict",
            crate::parse::Strictness::Lenient => "lenient",
        },
        run.question_results.len(),
        run.failures.len(),
        run.config.config_hash,
    ));

    if let Some(metrics) = &run.metrics {
        md.push_str("## Metrics (Acc / SRCC / PLCC, x100)\n\n");
        md.push_str("| Dimension | Questions | Acc | SRCC | PLCC |\n");
        md.push_str("|---|---|---|---|---|\n");
        for (dim, m) in &metrics.per_dimension {
            md.push_str(&metrics_row(dim.label(), m));
        }
        md.push_str(&metrics_row("Overall", &metrics.overall));
        md.push('\n');
        if !metrics.degenerate_flags.is_empty() {
            md.push_str("Degenerate cases:\n");
            for flag in &metrics.degenerate_flags {
                md.push_str(&format!("- {flag}\n"));
            }
            md.push('\n');
        }
    }

    md.push_str("## Per-video scores (normalized dimension means)\n\n");
    md.push_str("| Video | ");
    for dim in Dimension::ALL {
        md.push_str(&format!("{} | ", dim.label()));
    }
    md.push_str("Overall |\n|---|");
    md.push_str(&"---|".repeat(Dimension::ALL.len() + 1));
    md.push('\n');
    for vs in &run.video_scores {
        let dims = normalized_dim_scores(&vs.tree);
        let overall = normalized_overall(&vs.tree, &vs.tree.weights);
        let marker = if vs.prob_mode { "" } else { " (w/o prob)" };
        md.push_str(&format!("| {}{marker} | ", vs.video_id));
        for dim in Dimension::ALL {
            match dims.get(&dim) {
                Some(score) => md.push_str(&format!("{score:.4} | ")),
                None => md.push_str("- | "),
            }
        }
        match overall {
            Some(o) => md.push_str(&format!("{o:.4} |\n")),
            None => md.push_str("- |\n"),
        }
    }
    md.push('\n');

    if !run.failures.is_empty() {
        md.push_str("## Failures\n\n");
        for failure in &run.failures {
            md.push_str(&format!(
                "- {} (video {}): {:?} stage: {}\n",
                failure.question_id, failure.video_id, failure.stage, failure.error
            ));
        }
        md.push('\n');
    }
    md
}
