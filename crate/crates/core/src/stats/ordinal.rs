//! Ordered logit: `P(Y <= k) = sigmoid(threshold_k - eta)`.

use alloc::vec::Vec;

use super::StatsError;
use crate::math::{exp, ln, ln_1p, log_sigmoid, sigmoid};

/// Checks that thresholds are finite and strictly increasing.
pub fn validate_thresholds(thresholds: &[f64]) -> Result<(), StatsError> {
    if thresholds.is_empty() {
        return Err(StatsError::InvalidSpec("an ordered outcome needs at least one threshold".into()));
    }
    if thresholds.iter().any(|t| !t.is_finite()) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StatsError::InvalidSpec("thresholds must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// Thresholds on the logit scale from cumulative odds, e.g. `[0.02, 0.11, 0.46, 1.75]`.
pub fn thresholds_from_odds(odds: &[f64]) -> Vec<f64> {
    odds.iter().map(|o| ln(*o)).collect()
}

/// Probabilities of the `thresholds.len() + 1` levels.
pub fn ordered_probabilities(thresholds: &[f64], eta: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(thresholds.len() + 1);
    let mut below = 0.0;
    for t in thresholds {
        let cum = sigmoid(t - eta);
        out.push(cum - below);
        below = cum;
    }
    out.push(1.0 - below);
    out
}

/// `ln(sigmoid(a) - sigmoid(b))` for `a > b`.
fn ln_sigmoid_diff(a: f64, b: f64) -> f64 {
    // sigmoid(a) - sigmoid(b) = sigmoid(a) * sigmoid(-b) * (1 - e^(b - a))
    log_sigmoid(a) + log_sigmoid(-b) + ln_1p(-exp(b - a))
}

/// Log probability of `level` (0-based).
pub fn ordered_log_prob(thresholds: &[f64], eta: f64, level: usize) -> f64 {
    let k = thresholds.len();
    if level == 0 {
        log_sigmoid(thresholds[0] - eta)
    } else if level == k {
        log_sigmoid(eta - thresholds[k - 1])
    } else {
        ln_sigmoid_diff(thresholds[level] - eta, thresholds[level - 1] - eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lowest_level_from_cumulative_odds() {
        let th = thresholds_from_odds(&[0.02, 0.11, 0.46, 1.75]);
        let p = ordered_probabilities(&th, 0.0);
        assert!((p[0] - 0.02 / 1.02).abs() < 1e-12);
        assert!((p[0] - 0.0196).abs() < 1e-5);
        assert!((exp(ordered_log_prob(&th, 0.0, 0)) - p[0]).abs() < 1e-15);
        assert!(validate_thresholds(&[0.0, 0.0]).is_err());
        assert!(validate_thresholds(&th).is_ok());
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(raw in proptest::collection::vec(0.01f64..3.0, 1..8), start in -6.0f64..2.0, eta in -10.0f64..10.0) {
            let mut th = Vec::new();
            let mut t = start;
            for r in raw {
                th.push(t);
                t += r;
            }
            let p = ordered_probabilities(&th, eta);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (k, pk) in p.iter().enumerate() {
                prop_assert!(*pk >= 0.0);
                let lp = ordered_log_prob(&th, eta, k);
                prop_assert!((exp(lp) - pk).abs() < 1e-10 * pk.max(1e-3), "level {k}: {} vs {pk}", exp(lp));
            }
        }
    }
}
