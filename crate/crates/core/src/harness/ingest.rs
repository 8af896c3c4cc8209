//! Dataset ingestion: `videos.jsonl`, `questions.jsonl`, and optional
//! `annotations.jsonl`, with line-numbered diagnostics, duplicate-id
//! rejection, and cross-reference validation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::qgen::{EntityQuestion, QuestionRecord};
use crate::scoring::GroundTruth;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// One generated video under evaluation. `media_ref` is an opaque URI or
/// path forwarded to the backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub video_id: String,
    pub prompt_id: String,
    pub generator_name: String,
    pub media_ref: String,
}

fn default_schema_version() -> u32 {
    DATASET_SCHEMA_VERSION
}

/// Wire form of one `annotations.jsonl` line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub question_id: String,
    pub answer: crate::parse::Answer,
    #[serde(default)]
    pub reason: Option<String>,
}

/// A validated evaluation dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub videos: Vec<VideoRecord>,
    pub questions: Vec<EntityQuestion>,
    pub truths: Vec<GroundTruth>,
}

impl Dataset {
    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn truth(&self, question_id: &str) -> Option<&GroundTruth> {
        self.truths.iter().find(|t| t.question_id == question_id)
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_line<T: serde::de::DeserializeOwned>(
    file: &Path,
    line_no: usize,
    line: &str,
) -> Result<T, HarnessError> {
    serde_json::from_str(line).map_err(|e| HarnessError::Schema {
        file: file.display().to_string(),
        line: line_no,
        message: e.to_string(),
    })
}

/// Loads and cross-validates a dataset directory.
///
/// Rejects duplicate video/question/annotation ids, questions referencing
/// unknown videos, and annotations referencing unknown questions, naming
/// the offending file and line.
pub fn ingest(dir: impl AsRef<Path>) -> Result<Dataset, HarnessError> {
    let dir = dir.as_ref();

    let videos_path = dir.join("videos.jsonl");
    let mut videos = Vec::new();
    let mut video_ids = BTreeSet::new();
    for (line_no, line) in read_lines(&videos_path)? {
        let video: VideoRecord = parse_line(&videos_path, line_no, &line)?;
        if video.media_ref.trim().is_empty() {
            return Err(HarnessError::Schema {
                file: videos_path.display().to_string(),
                line: line_no,
                message: format!("video {}: empty media_ref", video.video_id),
            });
        }
        if !video_ids.insert(video.video_id.clone()) {
            return Err(HarnessError::DuplicateId {
                file: videos_path.display().to_string(),
                line: line_no,
                id: video.video_id,
            });
        }
        videos.push(video);
    }

    let questions_path = dir.join("questions.jsonl");
    let mut questions = Vec::new();
    let mut question_ids = BTreeSet::new();
    for (line_no, line) in read_lines(&questions_path)? {
        let record: QuestionRecord = parse_line(&questions_path, line_no, &line)?;
        if record.text.trim().is_empty() {
            return Err(HarnessError::Schema {
                file: questions_path.display().to_string(),
                line: line_no,
                message: format!("question {}: empty text", record.question_id),
            });
        }
        if !video_ids.contains(&record.video_id) {
            return Err(HarnessError::DanglingReference {
                file: questions_path.display().to_string(),
                line: line_no,
                kind: "video",
                id: record.video_id,
            });
        }
        if !question_ids.insert(record.question_id.clone()) {
            return Err(HarnessError::DuplicateId {
                file: questions_path.display().to_string(),
                line: line_no,
                id: record.question_id,
            });
        }
        questions.push(EntityQuestion::from(record));
    }

    let annotations_path = dir.join("annotations.jsonl");
    let mut truths = Vec::new();
    if annotations_path.is_file() {
        let mut annotated = BTreeSet::new();
        for (line_no, line) in read_lines(&annotations_path)? {
            let record: AnnotationRecord = parse_line(&annotations_path, line_no, &line)?;
            if !question_ids.contains(&record.question_id) {
                return Err(HarnessError::DanglingReference {
                    file: annotations_path.display().to_string(),
                    line: line_no,
                    kind: "question",
                    id: record.question_id,
                });
            }
            if !annotated.insert(record.question_id.clone()) {
                return Err(HarnessError::DuplicateId {
                    file: annotations_path.display().to_string(),
                    line: line_no,
                    id: record.question_id,
                });
            }
            truths.push(GroundTruth {
                question_id: record.question_id,
                answer: record.answer,
                reason: record.reason,
            });
        }
    }

    Ok(Dataset {
        videos,
        questions,
        truths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, lines: &[&str]) {
        std::fs::write(dir.join(name), lines.join("\n")).unwrap();
    }

    fn video_line(id: &str) -> String {
        format!(
            r#"{{"schema_version":1,"video_id":"{id}","prompt_id":"p1","generator_name":"genA","media_ref":"media/{id}.mp4"}}"#
        )
    }

    fn question_line(qid: &str, vid: &str) -> String {
        format!(
            r#"{{"schema_version":1,"question_id":"{qid}","video_id":"{vid}","dimension":"visual_quality","entity":{{"name":"dog","attributes":[],"actions":[],"source_prompt":"p1","inferred":false}},"text":"Is the dog sharp?","polarity":1,"polarity_defaulted":false}}"#
        )
    }

    #[test]
    fn valid_dataset_loads() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "videos.jsonl",
            &[&video_line("v1"), &video_line("v2")],
        );
        write(
            tmp.path(),
            "questions.jsonl",
            &[&question_line("q1", "v1"), &question_line("q2", "v2")],
        );
        write(
            tmp.path(),
            "annotations.jsonl",
            &[r#"{"schema_version":1,"question_id":"q1","answer":"Yes"}"#],
        );
        let dataset = ingest(tmp.path()).unwrap();
        assert_eq!(dataset.videos.len(), 2);
        assert_eq!(dataset.questions.len(), 2);
        assert_eq!(dataset.truths.len(), 1);
        assert!(dataset.video("v1").is_some());
        assert!(dataset.truth("q1").is_some());
    }

    #[test]
    fn dangling_video_reference_names_line() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "videos.jsonl", &[&video_line("v1")]);
        write(
            tmp.path(),
            "questions.jsonl",
            &[&question_line("q1", "v1"), &question_line("q2", "ghost")],
        );
        let err = ingest(tmp.path()).unwrap_err();
        match err {
            HarnessError::DanglingReference { line, kind, id, .. } => {
                assert_eq!(line, 2);
                assert_eq!(kind, "video");
                assert_eq!(id, "ghost");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn duplicate_question_id_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "videos.jsonl", &[&video_line("v1")]);
        write(
            tmp.path(),
            "questions.jsonl",
            &[&question_line("q1", "v1"), &question_line("q1", "v1")],
        );
        assert!(matches!(
            ingest(tmp.path()).unwrap_err(),
            HarnessError::DuplicateId { line: 2, .. }
        ));
    }

    #[test]
    fn malformed_json_reports_schema_error_with_line() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "videos.jsonl",
            &[&video_line("v1"), "{not json"],
        );
        write(tmp.path(), "questions.jsonl", &[]);
        assert!(matches!(
            ingest(tmp.path()).unwrap_err(),
            HarnessError::Schema { line: 2, .. }
        ));
    }

    #[test]
    fn dangling_annotation_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "videos.jsonl", &[&video_line("v1")]);
        write(tmp.path(), "questions.jsonl", &[&question_line("q1", "v1")]);
        write(
            tmp.path(),
            "annotations.jsonl",
            &[r#"{"schema_version":1,"question_id":"ghost","answer":"No"}"#],
        );
        assert!(matches!(
            ingest(tmp.path()).unwrap_err(),
            HarnessError::DanglingReference {
                kind: "question",
                ..
            }
        ));
    }
}
