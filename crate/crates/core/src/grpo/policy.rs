//! A desk-scale differentiable answer policy: a linear map from a question
//! feature vector plus position encoding to logits over a miniature
//! vocabulary of tag and answer tokens.

use rand::{Rng, RngExt};

/// Miniature vocabulary: tag tokens, the two answers, and two filler words
/// for the reason body.
pub const VOCAB: [&str; 8] = [
    "<answer>",
    "</answer>",
    "Yes",
    "No",
    "<reason>",
    "</reason>",
    "signal",
    "noise",
];

/// Fixed output length: open/answer/close, open/word/close.
pub const SEQ_LEN: usize = 6;

pub(crate) const TOK_ANSWER_OPEN: usize = 0;
pub(crate) const TOK_ANSWER_CLOSE: usize = 1;
pub(crate) const TOK_YES: usize = 2;
pub(crate) const TOK_NO: usize = 3;
pub(crate) const TOK_REASON_OPEN: usize = 4;
pub(crate) const TOK_REASON_CLOSE: usize = 5;
pub(crate) const TOK_SIGNAL: usize = 6;
pub(crate) const TOK_NOISE: usize = 7;

/// Tokens a well-formed output may carry at each position.
pub(crate) const TEMPLATE: [&[usize]; SEQ_LEN] = [
    &[TOK_ANSWER_OPEN],
    &[TOK_YES, TOK_NO],
    &[TOK_ANSWER_CLOSE],
    &[TOK_REASON_OPEN],
    &[TOK_SIGNAL, TOK_NOISE],
    &[TOK_REASON_CLOSE],
];

/// Linear policy over the miniature vocabulary. The input at position `t`
/// is the question feature vector concatenated with a one-hot position
/// encoding; logits are `W·φ / temperature`.
#[derive(Debug, Clone)]
pub struct ToyPolicy {
    feature_dim: usize,
    temperature: f64,
    /// Row-major `VOCAB.len() × (feature_dim + SEQ_LEN)`.
    weights: Vec<f64>,
}

impl ToyPolicy {
    pub fn new_uniform(feature_dim: usize, temperature: f64) -> Self {
        Self {
            feature_dim,
            temperature,
            weights: vec![0.0; VOCAB.len() * (feature_dim + SEQ_LEN)],
        }
    }

    /// A policy imitating an instruction-following base model: template
    /// tokens get `format_bias` added at their positions, with the answer
    /// and reason-word choices left uninformed.
    pub fn new_base(feature_dim: usize, temperature: f64, format_bias: f64) -> Self {
        let mut policy = Self::new_uniform(feature_dim, temperature);
        for (position, allowed) in TEMPLATE.iter().enumerate() {
            for &token in *allowed {
                let col = feature_dim + position;
                let idx = policy.weight_index(token, col);
                policy.weights[idx] += format_bias;
            }
        }
        policy
    }

    /// Random parameters for gradient checks.
    pub fn new_random(
        feature_dim: usize,
        temperature: f64,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let mut policy = Self::new_uniform(feature_dim, temperature);
        for w in &mut policy.weights {
            *w = (rng.random::<f64>() * 2.0 - 1.0) * scale;
        }
        policy
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.weights
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn input_dim(&self) -> usize {
        self.feature_dim + SEQ_LEN
    }

    fn weight_index(&self, token: usize, col: usize) -> usize {
        token * self.input_dim() + col
    }

    /// `φ_j` without materializing the concatenated vector: features first,
    /// then the position one-hot.
    fn input_at(&self, features: &[f64], position: usize, col: usize) -> f64 {
        if col < self.feature_dim {
            features[col]
        } else if col - self.feature_dim == position {
            1.0
        } else {
            0.0
        }
    }

    fn logits(&self, features: &[f64], position: usize) -> Vec<f64> {
        assert_eq!(
            features.len(),
            self.feature_dim,
            "feature dimension mismatch"
        );
        let mut out = Vec::with_capacity(VOCAB.len());
        for token in 0..VOCAB.len() {
            let row = &self.weights[token * self.input_dim()..(token + 1) * self.input_dim()];
            let mut z = 0.0;
            for (j, w) in row.iter().enumerate().take(self.feature_dim) {
                z += w * features[j];
            }
            z += row[self.feature_dim + position];
            out.push(z / self.temperature);
        }
        out
    }

    /// Log-probabilities over the vocabulary at one position.
    pub fn logprob_row(&self, features: &[f64], position: usize) -> Vec<f64> {
        let logits = self.logits(features, position);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        logits.into_iter().map(|z| z - lse).collect()
    }

    /// Log-probability rows for every position of the fixed-length output.
    pub fn logprob_rows(&self, features: &[f64]) -> Vec<Vec<f64>> {
        (0..SEQ_LEN)
            .map(|t| self.logprob_row(features, t))
            .collect()
    }

    /// Samples one output sequence.
    pub fn sample_sequence(&self, features: &[f64], rng: &mut impl Rng) -> Vec<usize> {
        (0..SEQ_LEN)
            .map(|t| {
                let row = self.logprob_row(features, t);
                let draw: f64 = rng.random();
                let mut cumulative = 0.0;
                for (v, lp) in row.iter().enumerate() {
                    cumulative += lp.exp();
                    if draw < cumulative {
                        return v;
                    }
                }
                VOCAB.len() - 1
            })
            .collect()
    }

    /// Per-token log-probabilities of a given token sequence.
    pub fn sequence_logprobs(&self, features: &[f64], tokens: &[usize]) -> Vec<f64> {
        tokens
            .iter()
            .enumerate()
            .map(|(t, &token)| self.logprob_row(features, t)[token])
            .collect()
    }

    /// Accumulates `Σ_t coeffs[t] · ∂ log p(tokens[t]) / ∂W` into `grad`.
    pub fn accumulate_logprob_grad(
        &self,
        features: &[f64],
        tokens: &[usize],
        coeffs: &[f64],
        grad: &mut [f64],
    ) {
        assert_eq!(tokens.len(), coeffs.len(), "coefficient shape mismatch");
        assert_eq!(grad.len(), self.weights.len(), "gradient shape mismatch");
        for (t, (&token, &coeff)) in tokens.iter().zip(coeffs).enumerate() {
            if coeff == 0.0 {
                continue;
            }
            let probs: Vec<f64> = self
                .logprob_row(features, t)
                .into_iter()
                .map(f64::exp)
                .collect();
            for v in 0..VOCAB.len() {
                let indicator = if v == token { 1.0 } else { 0.0 };
                let factor = coeff * (indicator - probs[v]) / self.temperature;
                if factor == 0.0 {
                    continue;
                }
                for col in 0..self.input_dim() {
                    let phi = self.input_at(features, t, col);
                    if phi != 0.0 {
                        grad[self.weight_index(v, col)] += factor * phi;
                    }
                }
            }
        }
    }

    /// One SGD step: `W ← W − lr · grad`.
    pub fn apply_gradient(&mut self, grad: &[f64], learning_rate: f64) {
        assert_eq!(grad.len(), self.weights.len(), "gradient shape mismatch");
        for (w, g) in self.weights.iter_mut().zip(grad) {
            *w -= learning_rate * g;
        }
    }
}

/// Renders a token sequence as whitespace-joined text, the form the tag
/// parser sees.
pub fn render_tokens(tokens: &[usize]) -> String {
    tokens
        .iter()
        .map(|&t| VOCAB[t])
        .collect::<Vec<_>>()
        .join(" ")
}
