//! Parsing of model outputs in the `<answer>…</answer>` / `<reason>…</reason>`
//! tag grammar, with the format checks the training reward relies on.
//!
//! `parse_tagged` is total: any UTF-8 string produces a [`TaggedResponse`];
//! malformed input is encoded as violation codes, never as an error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";
const REASON_OPEN: &str = "<reason>";
const REASON_CLOSE: &str = "</reason>";

/// A yes/no verdict extracted from the answer tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

impl std::fmt::Display for Answer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Answer::Yes => write!(f, "Yes"),
            Answer::No => write!(f, "No"),
        }
    }
}

/// How aggressively format rules are applied.
///
/// Strict mode additionally rejects standalone answer tokens appearing
/// outside the answer tag; lenient mode does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    Strict,
    Lenient,
}

/// One failed format check. Each code corresponds to exactly one rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationCode {
    MissingAnswerTag,
    MissingReasonTag,
    DuplicateTag,
    AnswerNotYesNo,
    EmptyReason,
    AnswerTokenOutsideAnswerTag,
}

/// Parse result for one raw model output.
///
/// `format_valid` implies `answer` is present, `reason` is present and
/// non-empty, and `violations` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedResponse {
    pub raw_text: String,
    pub answer: Option<Answer>,
    pub reason: Option<String>,
    pub format_valid: bool,
    pub violations: Vec<ViolationCode>,
}

/// The word sets accepted inside the answer tag, and scanned for in strict
/// mode outside it.
///
/// Defaults are the plain surface variants of the yes/no answer tokens.
/// Leading-space and quote-prefixed tokenizer variants collapse onto these
/// after trimming.
#[derive(Debug, Clone)]
pub struct AnswerWords {
    yes: Vec<String>,
    no: Vec<String>,
}

impl Default for AnswerWords {
    fn default() -> Self {
        Self {
            yes: vec!["Yes".into(), "yes".into(), "YES".into(), "\"Yes".into()],
            no: vec!["No".into(), "no".into(), "NO".into(), "\"No".into()],
        }
    }
}

impl AnswerWords {
    /// Builds word sets from raw token strings: members are trimmed,
    /// de-duplicated, and empty results dropped.
    pub fn from_token_strings<S: AsRef<str>>(yes: &[S], no: &[S]) -> Self {
        fn normalize<S: AsRef<str>>(raw: &[S]) -> Vec<String> {
            let mut out: Vec<String> = Vec::new();
            for t in raw {
                let w = t.as_ref().trim();
                if !w.is_empty() && !out.iter().any(|x| x == w) {
                    out.push(w.to_string());
                }
            }
            out
        }
        Self {
            yes: normalize(yes),
            no: normalize(no),
        }
    }

    fn classify(&self, content: &str) -> Option<Answer> {
        if self.yes.iter().any(|w| w == content) {
            Some(Answer::Yes)
        } else if self.no.iter().any(|w| w == content) {
            Some(Answer::No)
        } else {
            None
        }
    }

    /// Members usable for the strict standalone-token scan: purely
    /// word-character strings, so word boundaries are well defined.
    fn scan_words(&self) -> impl Iterator<Item = &str> {
        self.yes
            .iter()
            .chain(self.no.iter())
            .map(|s| s.as_str())
            .filter(|w| w.chars().all(|c| c.is_alphanumeric() || c == '_'))
    }
}

/// Errors from [`extract_answer_token_position`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PositionError {
    #[error("no answer tag in raw text")]
    NoAnswerTag,
    #[error("no token lies strictly inside the answer tag content")]
    NoTokenInsideAnswerTag,
}

/// A generated token with its character span in the raw text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token: String,
    /// Inclusive start, in characters.
    pub start: usize,
    /// Exclusive end, in characters.
    pub end: usize,
}

/// Parses a raw model output against the two-tag grammar using the default
/// answer word sets.
pub fn parse_tagged(raw: &str, strictness: Strictness) -> TaggedResponse {
    parse_tagged_with(raw, strictness, &AnswerWords::default())
}

/// Parses a raw model output against the two-tag grammar.
///
/// The grammar accepts exactly one `<answer>…</answer>` pair whose trimmed
/// content is a configured yes/no word, and exactly one non-empty
/// `<reason>…</reason>` pair, in either order. Strict mode additionally
/// requires that no standalone answer word appears outside the answer tag.
pub fn parse_tagged_with(raw: &str, strictness: Strictness, words: &AnswerWords) -> TaggedResponse {
    let mut violations = Vec::new();

    let answer_tag = locate_tag(raw, ANSWER_OPEN, ANSWER_CLOSE);
    let reason_tag = locate_tag(raw, REASON_OPEN, REASON_CLOSE);

    if matches!(answer_tag, TagScan::Missing) {
        violations.push(ViolationCode::MissingAnswerTag);
    }
    if matches!(reason_tag, TagScan::Missing) {
        violations.push(ViolationCode::MissingReasonTag);
    }
    if matches!(answer_tag, TagScan::Duplicate) || matches!(reason_tag, TagScan::Duplicate) {
        violations.push(ViolationCode::DuplicateTag);
    }

    let mut answer = None;
    let mut answer_span = None;
    if let TagScan::Found { outer, inner } = answer_tag {
        answer = words.classify(raw[inner.clone()].trim());
        if answer.is_none() {
            violations.push(ViolationCode::AnswerNotYesNo);
        }
        answer_span = Some(outer);
    }

    let mut reason = None;
    if let TagScan::Found { inner, .. } = reason_tag {
        let content = raw[inner].trim();
        if content.is_empty() {
            violations.push(ViolationCode::EmptyReason);
        } else {
            reason = Some(content.to_string());
        }
    }

    if strictness == Strictness::Strict {
        if let Some(span) = &answer_span {
            let outside = format!("{}{}", &raw[..span.start], &raw[span.end..]);
            if words.scan_words().any(|w| contains_standalone(&outside, w)) {
                violations.push(ViolationCode::AnswerTokenOutsideAnswerTag);
            }
        }
    }

    let format_valid = violations.is_empty();
    TaggedResponse {
        raw_text: raw.to_string(),
        answer,
        reason,
        format_valid,
        violations,
    }
}

/// Renders an answer and reason back into the tag grammar.
pub fn render(answer: Answer, reason: &str) -> String {
    format!("{ANSWER_OPEN}{answer}{ANSWER_CLOSE}{REASON_OPEN}{reason}{REASON_CLOSE}")
}

/// Index of the first generated token whose span lies strictly inside the
/// answer tag content.
///
/// Spans are in characters and must cover `raw` contiguously.
pub fn extract_answer_token_position(
    raw: &str,
    token_offsets: &[TokenSpan],
) -> Result<usize, PositionError> {
    let TagScan::Found { inner, .. } = locate_tag(raw, ANSWER_OPEN, ANSWER_CLOSE) else {
        return Err(PositionError::NoAnswerTag);
    };
    let content_start = char_index(raw, inner.start);
    let content_end = char_index(raw, inner.end);
    token_offsets
        .iter()
        .position(|t| t.start >= content_start && t.end <= content_end && t.start < t.end)
        .ok_or(PositionError::NoTokenInsideAnswerTag)
}

/// Builds contiguous character spans for a token sequence, as needed by
/// [`extract_answer_token_position`] when a backend reports tokens only.
pub fn spans_from_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<TokenSpan> {
    let mut spans = Vec::with_capacity(tokens.len());
    let mut cursor = 0usize;
    for t in tokens {
        let len = t.as_ref().chars().count();
        spans.push(TokenSpan {
            token: t.as_ref().to_string(),
            start: cursor,
            end: cursor + len,
        });
        cursor += len;
    }
    spans
}

enum TagScan {
    Missing,
    Duplicate,
    /// Byte ranges of the whole tag (`outer`) and its content (`inner`).
    Found {
        outer: std::ops::Range<usize>,
        inner: std::ops::Range<usize>,
    },
}

fn locate_tag(raw: &str, open: &str, close: &str) -> TagScan {
    let opens: Vec<usize> = find_all(raw, open);
    let closes: Vec<usize> = find_all(raw, close);
    if opens.len() > 1 || closes.len() > 1 {
        return TagScan::Duplicate;
    }
    match (opens.first(), closes.first()) {
        (Some(&o), Some(&c)) if o + open.len() <= c => TagScan::Found {
            outer: o..c + close.len(),
            inner: o + open.len()..c,
        },
        // Unpaired or reversed tags count as missing: no well-formed pair.
        _ => TagScan::Missing,
    }
}

fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        out.push(from + pos);
        from += pos + needle.len();
    }
    out
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True when `word` occurs in `text` bounded by non-word characters.
fn contains_standalone(text: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(pos) = text[from..].find(word) {
        let at = from + pos;
        let before_ok = text[..at]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word_char(c));
        let after_ok = text[at + word.len()..]
            .chars()
            .next()
            .is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        from = at + word.len();
    }
    false
}

fn char_index(s: &str, byte_idx: usize) -> usize {
    s[..byte_idx].chars().count()
}
