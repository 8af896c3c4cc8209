//! End-to-end toy training loop: sample rollout groups from the old policy,
//! score them with the accuracy and format rewards, and update the policy
//! with the clipped surrogate objective. Supports a zero start and a
//! cold start that first fits the labeled targets with cross-entropy.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::SyntheticQaEnv;
use super::policy::{render_tokens, ToyPolicy};
use super::{
    grpo_loss_and_grad, reward_accuracy, reward_format, sft_cross_entropy_and_grad, GrpoConfig,
    GrpoError, Reward, Rollout, RolloutGroup,
};
use crate::parse::{parse_tagged, Strictness, TaggedResponse};

pub const CURVE_SCHEMA_VERSION: u32 = 1;

/// Training protocol: straight reinforcement from the base policy, or a
/// supervised cold start on the labeled targets first. The reference policy
/// is frozen at whatever the protocol starts reinforcement from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Zero,
    ColdStart,
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(TrainMode::Zero),
            "cold_start" | "cold-start" => Ok(TrainMode::ColdStart),
            other => Err(format!("unknown train mode: {other}")),
        }
    }
}

/// Trainer settings beyond the core hyperparameters: the supervised
/// cold-start schedule and the gradient-norm clip that guards against
/// KL-ratio spikes on rarely-sampled tokens.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainOptions {
    pub sft_epochs: usize,
    pub sft_learning_rate: f64,
    pub max_grad_norm: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            sft_epochs: 100,
            sft_learning_rate: 1.0,
            max_grad_norm: 2.0,
        }
    }
}

/// Defaults for the toy setup: policy temperature, the format prior of the
/// pretrained-like base policy, and the synthetic environment shape.
pub const DEFAULT_TOY_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_TOY_FORMAT_BIAS: f64 = 2.5;
pub const DEFAULT_TOY_POOL_SIZE: usize = 48;
pub const DEFAULT_TOY_FEATURE_DIM: usize = 8;

/// One `curve.jsonl` line.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CurvePoint {
    pub schema_version: u32,
    pub step: usize,
    pub mean_reward: f64,
    pub acc_rate: f64,
    pub fmt_rate: f64,
    pub kl: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for point in &self.points {
            serde_json::to_writer(&mut out, point).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Mean of a field over the trailing `window` steps.
    pub fn tail_mean(&self, window: usize, field: impl Fn(&CurvePoint) -> f64) -> f64 {
        let tail = &self.points[self.points.len().saturating_sub(window)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().map(&field).sum::<f64>() / tail.len() as f64
    }
}

/// Splitmix-style stream derivation so every rollout draws from its own
/// substream of one master seed.
fn substream(seed: u64, a: u64, b: u64) -> u64 {
    let mut z =
        seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scales `grad` down to `max_norm` when its Euclidean norm exceeds it.
fn clip_gradient(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Fits the policy to the labeled target sequences with token-averaged
/// cross-entropy. Returns the final epoch's mean loss.
pub fn run_sft(
    policy: &mut ToyPolicy,
    env: &SyntheticQaEnv,
    opts: &TrainOptions,
) -> Result<f64, GrpoError> {
    let mut last = 0.0;
    for _ in 0..opts.sft_epochs {
        let mut epoch_loss = 0.0;
        for question in env.questions() {
            let rows = policy.logprob_rows(&question.features);
            let (loss, coeffs) = sft_cross_entropy_and_grad(&question.target_tokens, &rows, None)?;
            let mut grad = vec![0.0; policy.param_count()];
            policy.accumulate_logprob_grad(
                &question.features,
                &question.target_tokens,
                &coeffs,
                &mut grad,
            );
            clip_gradient(&mut grad, opts.max_grad_norm);
            policy.apply_gradient(&grad, opts.sft_learning_rate);
            epoch_loss += loss;
        }
        last = epoch_loss / env.len() as f64;
        if !last.is_finite() {
            return Err(GrpoError::DivergenceDetected { step: 0 });
        }
    }
    Ok(last)
}

struct PendingRollout {
    tokens: Vec<usize>,
    tagged: TaggedResponse,
    logprob_old: Vec<f64>,
    logprob_ref: Vec<f64>,
    reward: Reward,
}

/// Runs the full toy training protocol and returns the per-step curve.
///
/// The old policy snapshots at every outer step; one question is drawn per
/// step and a group of `G` rollouts is sampled from the snapshot, each from
/// its own seeded substream, so runs reproduce exactly under one seed.
pub fn train_toy_grpo(
    env: &SyntheticQaEnv,
    policy: &mut ToyPolicy,
    cfg: &GrpoConfig,
    steps: usize,
    mode: TrainMode,
    opts: &TrainOptions,
) -> Result<TrainingCurve, GrpoError> {
    cfg.validate()?;
    if env.is_empty() {
        return Err(GrpoError::InvalidConfig("environment pool is empty".into()));
    }
    if mode == TrainMode::ColdStart {
        run_sft(policy, env, opts)?;
    }
    let reference = policy.clone();

    let mut curve = TrainingCurve::default();
    for step in 0..steps {
        let mut pick_rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, step as u64, u64::MAX));
        let question = env.question(pick_rng.random_range(0..env.len()));
        let truth = SyntheticQaEnv::ground_truth(question);
        let old = policy.clone();

        let mut pending = Vec::with_capacity(cfg.group_size);
        for i in 0..cfg.group_size {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(cfg.seed, step as u64, i as u64));
            let tokens = old.sample_sequence(&question.features, &mut rng);
            let text = render_tokens(&tokens);
            let tagged = parse_tagged(&text, Strictness::Strict);
            let reward = Reward {
                accuracy: reward_accuracy(&tagged, &truth),
                format: reward_format(&tagged),
            };
            pending.push(PendingRollout {
                logprob_old: old.sequence_logprobs(&question.features, &tokens),
                logprob_ref: reference.sequence_logprobs(&question.features, &tokens),
                tokens,
                tagged,
                reward,
            });
        }

        let mut last_loss = None;
        for _ in 0..cfg.inner_iterations {
            let outputs: Vec<Rollout> = pending
                .iter()
                .map(|p| Rollout {
                    tagged: p.tagged.clone(),
                    logprob_new: policy.sequence_logprobs(&question.features, &p.tokens),
                    logprob_old: p.logprob_old.clone(),
                    logprob_ref: p.logprob_ref.clone(),
                    reward: p.reward,
                    advantage: 0.0,
                })
                .collect();
            let group = RolloutGroup::new(question.id.clone(), outputs, cfg)?;
            let (loss, lp_grads) = grpo_loss_and_grad(&group, cfg)?;
            if !loss.total.is_finite() {
                return Err(GrpoError::DivergenceDetected { step });
            }
            let mut grad = vec![0.0; policy.param_count()];
            for (p, lp_grad) in pending.iter().zip(&lp_grads) {
                policy.accumulate_logprob_grad(&question.features, &p.tokens, lp_grad, &mut grad);
            }
            clip_gradient(&mut grad, opts.max_grad_norm);
            policy.apply_gradient(&grad, cfg.learning_rate);
            last_loss = Some(loss);
        }
        let loss = last_loss.expect("inner_iterations >= 1");

        let g = cfg.group_size as f64;
        curve.points.push(CurvePoint {
            schema_version: CURVE_SCHEMA_VERSION,
            step,
            mean_reward: pending.iter().map(|p| p.reward.total()).sum::<f64>() / g,
            acc_rate: pending.iter().map(|p| p.reward.accuracy).sum::<f64>() / g,
            fmt_rate: pending.iter().map(|p| p.reward.format).sum::<f64>() / g,
            kl: loss.mean_kl,
            loss: loss.total,
        });
    }
    Ok(curve)
}
