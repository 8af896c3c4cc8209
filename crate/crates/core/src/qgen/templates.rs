//! Prompt templates and in-context example sets for question generation.
//!
//! The built-in templates and examples ship with the crate and are
//! functional stand-ins; both can be replaced per run from files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dimension;

/// Versioned prompt templates. `{{placeholders}}` are substituted at render
/// time.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub extraction_id: String,
    pub extraction: String,
    pub question_id: String,
    pub question: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            extraction_id: "entity_extraction_v1".to_string(),
            extraction: include_str!("../../templates/entity_extraction_v1.txt").to_string(),
            question_id: "question_gen_v1".to_string(),
            question: include_str!("../../templates/question_gen_v1.txt").to_string(),
        }
    }
}

impl TemplateSet {
    /// Loads `entity_extraction_v1.txt` and `question_gen_v1.txt` overrides
    /// from a directory, keeping the built-in for any missing file.
    pub fn load_dir(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let mut set = Self::default();
        let extraction = dir.as_ref().join(format!("{}.txt", set.extraction_id));
        if extraction.is_file() {
            set.extraction = std::fs::read_to_string(extraction)?;
        }
        let question = dir.as_ref().join(format!("{}.txt", set.question_id));
        if question.is_file() {
            set.question = std::fs::read_to_string(question)?;
        }
        Ok(set)
    }
}

/// Substitutes `{{name}}` placeholders.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

/// Explanation text injected into the question-generation prompt for each
/// assessment dimension.
pub fn dimension_explanation(dimension: Dimension) -> &'static str {
    match dimension {
        Dimension::VisualQuality => {
            "Judge how cleanly the entity is rendered: sharpness, freedom from \
             blur, smearing, distorted geometry, and rendering artifacts."
        }
        Dimension::TextAlignment => {
            "Judge whether the entity and its described attributes and actions \
             match what the prompt asked for."
        }
        Dimension::TemporalConsistency => {
            "Judge whether the entity keeps a stable identity and appearance \
             across frames, without flickering, duplication, or abrupt changes."
        }
        Dimension::FactualConsistency => {
            "Judge whether the entity respects real-world characteristics and \
             physical laws: plausible shape, scale, material, and behaviour."
        }
        Dimension::DynamicDegree => {
            "Judge whether the entity shows a natural amount of motion rather \
             than being frozen, and whether that motion is plausible."
        }
    }
}

/// In-context example blocks: a set for entity extraction plus one set per
/// assessment dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IclExampleSet {
    #[serde(default)]
    pub schema_version: u32,
    pub extraction: Vec<String>,
    #[serde(flatten)]
    pub per_dimension: BTreeMap<Dimension, Vec<String>>,
}

impl Default for IclExampleSet {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../templates/icl_v1.json"))
            .expect("built-in ICL example set parses")
    }
}

impl IclExampleSet {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn extraction_block(&self) -> String {
        self.extraction.join("\n\n")
    }

    pub fn dimension_block(&self, dimension: Dimension) -> Option<String> {
        let examples = self.per_dimension.get(&dimension)?;
        if examples.is_empty() {
            return None;
        }
        Some(examples.join("\n\n"))
    }
}
