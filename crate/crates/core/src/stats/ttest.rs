//! Welch's unequal-variance t-test.

use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::StatsError;
use crate::math::{mean, sqrt, variance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    pub p: f64,
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::Degenerate("each sample needs at least two values".into()));
    }
    let (va, vb) = (variance(a), variance(b));
    if va == 0.0 && vb == 0.0 {
        if mean(a) == mean(b) {
            return Ok(TTestResult { t: 0.0, df: (a.len() + b.len() - 2) as f64, p: 1.0 });
        }
        return Err(StatsError::Degenerate("both samples have zero variance".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (mean(a) - mean(b)) / sqrt(sa + sb);
    let df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTestResult { t, df, p: student_t_two_sided(t, df) })
}
