//! Batch evaluation harness for AI-generated video, built around
//! entity-level yes/no questions: question generation against an LLM
//! endpoint, tagged-response parsing, token-probability hierarchical
//! scoring, group-relative policy-optimization training math verified on a
//! toy policy, and benchmark correlation metrics.

pub mod grpo;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod parse;
pub mod qgen;
pub mod scoring;
pub mod selftest;
pub mod util;

pub use qgen::{Dimension, Polarity};
