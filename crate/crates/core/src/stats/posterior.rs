//! Summaries of posterior draws.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::math::{ceil, exp, mean, quantile_sorted, sort_floats, sqrt, variance, PI};

/// Residual variance of the standard logistic distribution.
pub const LOGIT_RESIDUAL_VARIANCE: f64 = PI * PI / 3.0;

pub const MIN_HPD_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Shortest window over the sorted samples holding `ceil(mass * n)` points.
pub fn hpd_interval(samples: &[f64], mass: f64) -> Result<Interval, StatsError> {
    if samples.len() < MIN_HPD_SAMPLES {
        return Err(StatsError::InsufficientSamples { need: MIN_HPD_SAMPLES, got: samples.len() });
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(StatsError::Degenerate("interval mass must be in (0, 1]".into()));
    }
    let mut s = samples.to_vec();
    sort_floats(&mut s);
    let n = s.len();
    let m = (ceil(mass * n as f64) as usize).clamp(1, n);
    let mut best = (0, s[m - 1] - s[0]);
    for i in 1..=n - m {
        let w = s[i + m - 1] - s[i];
        if w < best.1 {
            best = (i, w);
        }
    }
    Ok(Interval { lower: s[best.0], upper: s[best.0 + m - 1] })
}

/// Equal-tailed interval from the `(1 - mass) / 2` and `(1 + mass) / 2` quantiles.
pub fn central_interval(samples: &[f64], mass: f64) -> Result<Interval, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::InsufficientSamples { need: 1, got: 0 });
    }
    let mut s = samples.to_vec();
    sort_floats(&mut s);
    Ok(Interval { lower: quantile_sorted(&s, (1.0 - mass) / 2.0), upper: quantile_sorted(&s, (1.0 + mass) / 2.0) })
}

/// Split-R̂: each chain is halved and the potential scale reduction is
/// computed over the halves. Returns 1 for constant draws.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = mean(&parts.iter().map(|p| variance(p)).collect::<Vec<_>>());
    let b = half as f64 * variance(&means);
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let n = half as f64;
    let var_plus = (n - 1.0) / n * w + b / n;
    sqrt(var_plus / w)
}

/// Intraclass correlation per grouping: `tau_k / (sum(tau) + sigma2)`.
pub fn icc(tau00: &[f64], sigma2: f64) -> Result<Vec<f64>, StatsError> {
    if let Some(t) = tau00.iter().chain([&sigma2]).find(|t| !(**t >= 0.0)) {
        return Err(StatsError::NegativeVariance(*t));
    }
    let total: f64 = tau00.iter().sum::<f64>() + sigma2;
    if total == 0.0 {
        return Ok(tau00.iter().map(|_| 0.0).collect());
    }
    Ok(tau00.iter().map(|t| t / total).collect())
}

/// Marginal and conditional R² from the fixed-part variance, the random
/// intercept variances and the residual variance.
pub fn variance_partition_r2(fixed_variance: f64, tau00_total: f64, sigma2: f64) -> (f64, f64) {
    let total = fixed_variance + tau00_total + sigma2;
    (fixed_variance / total, (fixed_variance + tau00_total) / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSummary {
    pub mean: f64,
    pub sd: f64,
    pub central: Interval,
    pub hpd: Interval,
}

pub fn summarize_draws(draws: &[f64], mass: f64) -> Result<DrawSummary, StatsError> {
    Ok(DrawSummary {
        mean: mean(draws),
        sd: sqrt(variance(draws)),
        central: central_interval(draws, mass)?,
        hpd: hpd_interval(draws, mass)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub numerator: String,
    pub denominator: String,
    /// Mean of `exp(eta_num - eta_den)` over draws.
    pub odds_ratio: f64,
    pub hpd: Interval,
    pub draws: Vec<f64>,
}

/// Odds ratios between categories, draw by draw. `category_draws` holds the
/// linear predictor of each category on the logit scale, aligned by draw.
pub fn posterior_contrasts(
    category_draws: &BTreeMap<String, Vec<f64>>,
    pairs: &[(&str, &str)],
) -> Result<Vec<Contrast>, StatsError> {
    let get = |k: &str| category_draws.get(k).ok_or_else(|| StatsError::UnknownCategory(k.to_string()));
    pairs
        .iter()
        .map(|&(a, b)| {
            let (da, db) = (get(a)?, get(b)?);
            if da.len() != db.len() {
                return Err(StatsError::Degenerate("draw counts differ between categories".into()));
            }
            let draws: Vec<f64> = da.iter().zip(db).map(|(x, y)| exp(x - y)).collect();
            Ok(Contrast {
                numerator: a.to_string(),
                denominator: b.to_string(),
                odds_ratio: mean(&draws),
                hpd: hpd_interval(&draws, 0.95)?,
                draws,
            })
        })
        .collect()
}

/// One-sample Kolmogorov–Smirnov distance between draws and a CDF.
pub fn ks_distance(draws: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = draws.to_vec();
    sort_floats(&mut s);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
