//! Independent reference implementations used only to cross-check the main
//! code paths, from the `selftest` command and the acceptance suite. Each
//! oracle deliberately takes a different route than the implementation it
//! checks: direct-formula evaluation, compensated summation, counting-based
//! ranks, or brute-force enumeration.

use crate::metrics::{PreferenceLabel, PreferencePair};
use crate::scoring::TokenSets;

/// Neumaier-compensated sum.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for &x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            compensation += (sum - t) + x;
        } else {
            compensation += (x - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Direct softmax over the token-set members found in `entries`, with no
/// max-subtraction and compensated sums: `p_yes = Σ e^{y_j} / Σ e^{x}`.
pub fn restricted_softmax_reference(
    entries: &[(String, f64)],
    sets: &TokenSets,
) -> Option<(f64, f64)> {
    let mut yes_terms = Vec::new();
    let mut all_terms = Vec::new();
    for (token, value) in entries {
        let is_yes = sets.yes_tokens.iter().any(|t| t == token);
        let is_no = sets.no_tokens.iter().any(|t| t == token);
        if !is_yes && !is_no {
            continue;
        }
        let weight = value.exp();
        all_terms.push(weight);
        if is_yes {
            yes_terms.push(weight);
        }
    }
    if all_terms.is_empty() {
        return None;
    }
    let total = compensated_sum(&all_terms);
    let p_yes = compensated_sum(&yes_terms) / total;
    Some((p_yes, 1.0 - p_yes))
}

/// Double-double value: an unevaluated sum of two floats carrying roughly
/// 32 significant digits.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> DoubleDouble {
    let hi = a + b;
    let v = hi - a;
    let lo = (a - (hi - v)) + (b - v);
    DoubleDouble { hi, lo }
}

fn quick_two_sum(a: f64, b: f64) -> DoubleDouble {
    let hi = a + b;
    let lo = b - (hi - a);
    DoubleDouble { hi, lo }
}

/// Exact product via fused multiply-add.
fn two_prod(a: f64, b: f64) -> DoubleDouble {
    let hi = a * b;
    let lo = f64::mul_add(a, b, -hi);
    DoubleDouble { hi, lo }
}

impl DoubleDouble {
    const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    fn from_f64(v: f64) -> Self {
        DoubleDouble { hi: v, lo: 0.0 }
    }

    fn add(self, other: DoubleDouble) -> DoubleDouble {
        let s = two_sum(self.hi, other.hi);
        quick_two_sum(s.hi, s.lo + self.lo + other.lo)
    }

    fn sub(self, other: DoubleDouble) -> DoubleDouble {
        self.add(DoubleDouble {
            hi: -other.hi,
            lo: -other.lo,
        })
    }

    fn mul(self, other: DoubleDouble) -> DoubleDouble {
        let p = two_prod(self.hi, other.hi);
        quick_two_sum(p.hi, p.lo + self.hi * other.lo + self.lo * other.hi)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Pearson correlation by the expanded direct formula
/// `(nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²))`, accumulated in
/// double-double precision so the cancellation in the numerator stays
/// far below the comparison tolerance.
pub fn pearson_reference(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = DoubleDouble::from_f64(x.len() as f64);
    let mut sx = DoubleDouble::ZERO;
    let mut sy = DoubleDouble::ZERO;
    let mut sxy = DoubleDouble::ZERO;
    let mut sxx = DoubleDouble::ZERO;
    let mut syy = DoubleDouble::ZERO;
    for (&a, &b) in x.iter().zip(y) {
        sx = sx.add(DoubleDouble::from_f64(a));
        sy = sy.add(DoubleDouble::from_f64(b));
        sxy = sxy.add(two_prod(a, b));
        sxx = sxx.add(two_prod(a, a));
        syy = syy.add(two_prod(b, b));
    }
    let num = n.mul(sxy).sub(sx.mul(sy));
    let dx = n.mul(sxx).sub(sx.mul(sx)).to_f64();
    let dy = n.mul(syy).sub(sy.mul(sy)).to_f64();
    if dx <= 0.0 || dy <= 0.0 {
        return None;
    }
    Some(num.to_f64() / (dx * dy).sqrt())
}

/// Fractional ranks by counting: `rank_i = 1 + #{v < v_i} + (#{v = v_i} − 1)/2`.
pub fn counting_ranks_reference(values: &[f64]) -> Vec<f64> {
    doubled_counting_ranks(values)
        .into_iter()
        .map(|r| r as f64 / 2.0)
        .collect()
}

/// Twice the fractional rank, which is always an integer:
/// `2·rank_i = 1 + 2·#{v < v_i} + #{v = v_i}`.
fn doubled_counting_ranks(values: &[f64]) -> Vec<i128> {
    values
        .iter()
        .map(|&v| {
            let below = values.iter().filter(|&&w| w < v).count() as i128;
            let equal = values.iter().filter(|&&w| w == v).count() as i128;
            1 + 2 * below + equal
        })
        .collect()
}

/// Spearman correlation through exact integer arithmetic: the Pearson
/// formula on doubled ranks has integer numerator and radicands, so the
/// only roundings are one square root and one division.
pub fn spearman_reference(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let rx = doubled_counting_ranks(x);
    let ry = doubled_counting_ranks(y);
    let n = x.len() as i128;
    let sx: i128 = rx.iter().sum();
    let sy: i128 = ry.iter().sum();
    let sxy: i128 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: i128 = rx.iter().map(|a| a * a).sum();
    let syy: i128 = ry.iter().map(|a| a * a).sum();
    let num = n * sxy - sx * sy;
    let dx = n * sxx - sx * sx;
    let dy = n * syy - sy * sy;
    if dx <= 0 || dy <= 0 {
        return None;
    }
    Some(num as f64 / ((dx as f64) * (dy as f64)).sqrt())
}

/// Brute-force tie-calibrated pairwise accuracy: evaluates every grid
/// threshold by direct enumeration and keeps the smallest maximizer.
pub fn tau_diff_reference(
    pairs: &[PreferencePair],
    grid: &[f64],
) -> Option<(f64, Option<f64>, f64)> {
    if pairs.is_empty() || grid.is_empty() {
        return None;
    }
    let decided: Vec<&PreferencePair> = pairs
        .iter()
        .filter(|p| p.human_label != PreferenceLabel::Tie)
        .collect();
    let diff = if decided.is_empty() {
        None
    } else {
        let mut correct = 0;
        for p in &decided {
            let win = p.score_a > p.score_b;
            if (win && p.human_label == PreferenceLabel::Win)
                || (!win && p.human_label == PreferenceLabel::Lose)
            {
                correct += 1;
            }
        }
        Some(correct as f64 / decided.len() as f64)
    };
    let mut best = (f64::NEG_INFINITY, grid[0]);
    for &threshold in grid {
        let mut correct = 0;
        for p in pairs {
            let predicted = if (p.score_a - p.score_b).abs() <= threshold {
                PreferenceLabel::Tie
            } else if p.score_a > p.score_b {
                PreferenceLabel::Win
            } else {
                PreferenceLabel::Lose
            };
            if predicted == p.human_label {
                correct += 1;
            }
        }
        let accuracy = correct as f64 / pairs.len() as f64;
        if accuracy > best.0 {
            best = (accuracy, threshold);
        }
    }
    Some((best.0, diff, best.1))
}

/// Central finite-difference gradient of `f` at `params`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(params.len());
    let mut work = params.to_vec();
    for i in 0..params.len() {
        let original = work[i];
        work[i] = original + step;
        let plus = f(&work);
        work[i] = original - step;
        let minus = f(&work);
        work[i] = original;
        grad.push((plus - minus) / (2.0 * step));
    }
    grad
}

/// Relative error between two gradient vectors:
/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-12)`.
pub fn gradient_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}
