//! Benchmark metrics: Spearman and Pearson correlation between predicted and
//! reference scores, and pairwise preference accuracy with tie calibration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Predicted/reference score pairs keyed by item id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedScores {
    items: Vec<(String, f64, f64)>,
}

impl PairedScores {
    /// Ids must be unique and all values finite.
    pub fn new(items: Vec<(String, f64, f64)>) -> Result<Self, MetricsError> {
        let mut seen = std::collections::BTreeSet::new();
        for (id, predicted, reference) in &items {
            if !seen.insert(id.as_str()) {
                return Err(MetricsError::DuplicateId(id.clone()));
            }
            if !predicted.is_finite() || !reference.is_finite() {
                return Err(MetricsError::NonFinite(id.clone()));
            }
        }
        Ok(Self { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn predicted(&self) -> Vec<f64> {
        self.items.iter().map(|(_, p, _)| *p).collect()
    }

    pub fn reference(&self) -> Vec<f64> {
        self.items.iter().map(|(_, _, r)| *r).collect()
    }
}

/// Human preference over a scored pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceLabel {
    Win,
    Lose,
    Tie,
}

/// One annotated pair: predicted scores for both sides plus the human label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferencePair {
    pub pair_id: String,
    pub score_a: f64,
    pub score_b: f64,
    pub human_label: PreferenceLabel,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least two items, got {0}")]
    TooFewItems(usize),
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("non-finite score for item {0}")]
    NonFinite(String),
    #[error("degenerate variance: all {0} values are equal")]
    DegenerateVariance(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("tie threshold grid is empty")]
    EmptyGrid,
}

/// Spearman rank correlation with fractional (average) ranks for ties.
pub fn srcc(pairs: &PairedScores) -> Result<f64, MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewItems(pairs.len()));
    }
    let ranks_pred = fractional_ranks(&pairs.predicted());
    let ranks_ref = fractional_ranks(&pairs.reference());
    pearson(&ranks_pred, &ranks_ref)
}

/// Pearson linear correlation.
pub fn plcc(pairs: &PairedScores) -> Result<f64, MetricsError> {
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewItems(pairs.len()));
    }
    pearson(&pairs.predicted(), &pairs.reference())
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mean_x;
        let dy = yi - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::DegenerateVariance("predicted"));
    }
    if syy == 0.0 {
        return Err(MetricsError::DegenerateVariance("reference"));
    }
    // Rounding can push |r| past 1 by an ulp on (near-)perfectly correlated
    // data.
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties assigned the average of their positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i+1..=j share the average rank.
        let avg = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            ranks[order[k]] = avg;
        }
        i = j;
    }
    ranks
}

/// Pairwise preference accuracy.
///
/// `diff` scores only human win/lose pairs, predicting a win for side A
/// exactly when its score is higher; with no such pairs it is absent.
/// `tau` scores all pairs, predicting a tie when the score gap is at most
/// `t`, with `t` chosen from the grid to maximize accuracy (smallest
/// maximizer wins); the chosen threshold is reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauDiff {
    pub tau: f64,
    pub diff: Option<f64>,
    pub tie_threshold: f64,
}

pub fn pairwise_tau_diff(
    pairs: &[PreferencePair],
    tie_threshold_grid: &[f64],
) -> Result<TauDiff, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if tie_threshold_grid.is_empty() {
        return Err(MetricsError::EmptyGrid);
    }

    let decided: Vec<&PreferencePair> = pairs
        .iter()
        .filter(|p| p.human_label != PreferenceLabel::Tie)
        .collect();
    let diff = if decided.is_empty() {
        None
    } else {
        let correct = decided
            .iter()
            .filter(|p| {
                let predicted = if p.score_a > p.score_b {
                    PreferenceLabel::Win
                } else {
                    PreferenceLabel::Lose
                };
                predicted == p.human_label
            })
            .count();
        Some(correct as f64 / decided.len() as f64)
    };

    let mut best_tau = f64::NEG_INFINITY;
    let mut best_threshold = tie_threshold_grid[0];
    for &t in tie_threshold_grid {
        let correct = pairs
            .iter()
            .filter(|p| tie_aware_prediction(p.score_a, p.score_b, t) == p.human_label)
            .count();
        let acc = correct as f64 / pairs.len() as f64;
        if acc > best_tau {
            best_tau = acc;
            best_threshold = t;
        }
    }
    Ok(TauDiff {
        tau: best_tau,
        diff,
        tie_threshold: best_threshold,
    })
}

fn tie_aware_prediction(score_a: f64, score_b: f64, threshold: f64) -> PreferenceLabel {
    if (score_a - score_b).abs() <= threshold {
        PreferenceLabel::Tie
    } else if score_a > score_b {
        PreferenceLabel::Win
    } else {
        PreferenceLabel::Lose
    }
}

/// Default calibration grid: 0 to 0.5 in steps of 0.01.
pub fn default_tie_grid() -> Vec<f64> {
    (0..=50).map(|i| i as f64 * 0.01).collect()
}

/// Contents of `metrics-report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub tau: Option<f64>,
    pub diff: Option<f64>,
    pub tie_threshold: Option<f64>,
    pub n_scores: usize,
    pub n_pairs: usize,
    pub degenerate_flags: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paired(pred: &[f64], reference: &[f64]) -> PairedScores {
        PairedScores::new(
            pred.iter()
                .zip(reference)
                .enumerate()
                .map(|(i, (p, r))| (format!("v{i}"), *p, *r))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn srcc_identical_order_is_one() {
        let p = paired(&[0.1, 0.4, 0.9], &[1.0, 2.0, 3.0]);
        assert_eq!(srcc(&p).unwrap(), 1.0);
    }

    #[test]
    fn srcc_reversed_order_is_minus_one() {
        let p = paired(&[0.9, 0.4, 0.1], &[1.0, 2.0, 3.0]);
        assert_eq!(srcc(&p).unwrap(), -1.0);
    }

    #[test]
    fn srcc_fixture_is_exactly_minus_half() {
        // Classic rank formula: 1 - 6 * sum(d^2) / (n(n^2-1)) = 1 - 36/24.
        let p = paired(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]);
        assert_eq!(srcc(&p).unwrap(), -0.5);
    }

    #[test]
    fn srcc_handles_ties_with_average_ranks() {
        let ranks = fractional_ranks(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(ranks, vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn plcc_affine_relation_is_exact() {
        let x = [0.0, 1.0, 2.0, 3.5, 9.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let p = paired(&x, &y);
        assert!((plcc(&p).unwrap() - 1.0).abs() < 1e-12);
        let y_neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let p = paired(&x, &y_neg);
        assert!((plcc(&p).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_errors() {
        let two_equal = paired(&[1.0, 1.0], &[1.0, 2.0]);
        assert_eq!(
            plcc(&two_equal).unwrap_err(),
            MetricsError::DegenerateVariance("predicted")
        );
        let p = paired(&[1.0], &[1.0]);
        assert_eq!(srcc(&p).unwrap_err(), MetricsError::TooFewItems(1));
        assert!(PairedScores::new(vec![("a".into(), 1.0, 1.0), ("a".into(), 2.0, 2.0)]).is_err());
        assert!(PairedScores::new(vec![("a".into(), f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn symmetry_of_correlations() {
        let p = paired(&[0.3, 0.9, 0.1, 0.7], &[0.2, 0.5, 0.8, 0.4]);
        let swapped = paired(&[0.2, 0.5, 0.8, 0.4], &[0.3, 0.9, 0.1, 0.7]);
        assert!((srcc(&p).unwrap() - srcc(&swapped).unwrap()).abs() < 1e-15);
        assert!((plcc(&p).unwrap() - plcc(&swapped).unwrap()).abs() < 1e-15);
    }

    fn pref(id: &str, a: f64, b: f64, label: PreferenceLabel) -> PreferencePair {
        PreferencePair {
            pair_id: id.into(),
            score_a: a,
            score_b: b,
            human_label: label,
        }
    }

    #[test]
    fn tau_diff_perfect_ordering() {
        let pairs = vec![
            pref("p1", 0.9, 0.1, PreferenceLabel::Win),
            pref("p2", 0.2, 0.8, PreferenceLabel::Lose),
            pref("p3", 0.7, 0.3, PreferenceLabel::Win),
        ];
        let out = pairwise_tau_diff(&pairs, &default_tie_grid()).unwrap();
        assert_eq!(out.tau, 1.0);
        assert_eq!(out.diff, Some(1.0));
        assert_eq!(out.tie_threshold, 0.0);
    }

    #[test]
    fn tau_diff_all_ties_zero_gap() {
        let pairs = vec![
            pref("p1", 0.5, 0.5, PreferenceLabel::Tie),
            pref("p2", 0.2, 0.2, PreferenceLabel::Tie),
        ];
        let out = pairwise_tau_diff(&pairs, &default_tie_grid()).unwrap();
        assert_eq!(out.tau, 1.0);
        assert_eq!(out.diff, None);
    }

    #[test]
    fn tau_picks_smallest_maximizing_threshold() {
        // The tie pair scores right for every t at or above its gap, so the
        // chosen threshold is the smallest such grid value.
        let gap = 0.55f64 - 0.45f64;
        let pairs = vec![
            pref("p1", 0.55, 0.45, PreferenceLabel::Tie),
            pref("p2", 0.9, 0.1, PreferenceLabel::Win),
        ];
        let grid = default_tie_grid();
        let expected = *grid.iter().find(|t| **t >= gap).unwrap();
        let out = pairwise_tau_diff(&pairs, &grid).unwrap();
        assert_eq!(out.tau, 1.0);
        assert_eq!(out.tie_threshold, expected);
    }

    // Six pairs, two human ties. Gaps are exact multiples of 0.25, so the
    // enumeration below is exact: at t=0 the 0.25-gap tie is missed (5/6);
    // from t=0.25 every pair is right, and no lose pair has a gap that
    // small. Expected: tau = 1 at the smallest maximizer 0.25, diff = 1.
    #[test]
    fn six_pair_fixture_with_two_ties() {
        let pairs = vec![
            pref("p1", 1.0, 0.0, PreferenceLabel::Win),
            pref("p2", 0.0, 0.75, PreferenceLabel::Lose),
            pref("p3", 0.5, 0.5, PreferenceLabel::Tie),
            pref("p4", 0.75, 0.5, PreferenceLabel::Tie),
            pref("p5", 1.0, 0.25, PreferenceLabel::Win),
            pref("p6", 0.0, 0.75, PreferenceLabel::Lose),
        ];
        let grid = [0.0, 0.1, 0.25, 0.5];
        let out = pairwise_tau_diff(&pairs, &grid).unwrap();
        assert_eq!(out.tau, 1.0);
        assert_eq!(out.diff, Some(1.0));
        assert_eq!(out.tie_threshold, 0.25);
        // Brute-force enumeration over the grid agrees.
        let (ref_tau, ref_diff, ref_threshold) =
            crate::oracles::tau_diff_reference(&pairs, &grid).unwrap();
        assert_eq!(out.tau, ref_tau);
        assert_eq!(out.diff, ref_diff);
        assert_eq!(out.tie_threshold, ref_threshold);
    }

    #[test]
    fn tau_diff_empty_inputs() {
        assert_eq!(
            pairwise_tau_diff(&[], &default_tie_grid()).unwrap_err(),
            MetricsError::EmptyInput
        );
        let pairs = vec![pref("p1", 1.0, 0.0, PreferenceLabel::Win)];
        assert_eq!(
            pairwise_tau_diff(&pairs, &[]).unwrap_err(),
            MetricsError::EmptyGrid
        );
    }
}
