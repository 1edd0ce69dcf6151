//! Boxplot statistics, histograms and Gaussian KDE tables.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
    pub mean: f64,
    /// Most frequent value after rounding to whole seconds; ties go to the smallest.
    pub mode: f64,
}

pub fn boxplot_stats(samples: &[f64]) -> Result<BoxplotStats, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sorted = samples.to_vec();
    math::sort_floats(&mut sorted);
    let q1 = math::quantile_sorted(&sorted, 0.25);
    let median = math::quantile_sorted(&sorted, 0.5);
    let q3 = math::quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let whisker_lo = q1 - 1.5 * iqr;
    let whisker_hi = q3 + 1.5 * iqr;
    let outliers = sorted.iter().copied().filter(|&x| x < whisker_lo || x > whisker_hi).collect();
    Ok(BoxplotStats {
        n: samples.len(),
        q1,
        median,
        q3,
        iqr,
        whisker_lo,
        whisker_hi,
        outliers,
        mean: math::mean(samples),
        mode: rounded_mode(samples),
    })
}

/// Mode of the values rounded to integers. Smallest value wins ties.
pub fn rounded_mode(samples: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &x in samples {
        *counts.entry(math::round(x) as i64).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    counts.into_iter().find(|(_, c)| *c == best).map_or(f64::NAN, |(v, _)| v as f64)
}

/// Counts of each integer value.
pub fn histogram(values: &[u32]) -> BTreeMap<u32, u32> {
    let mut h = BTreeMap::new();
    for &v in values {
        *h.entry(v).or_default() += 1;
    }
    h
}

/// Silverman's rule of thumb: 0.9 · min(sd, IQR/1.34) · n^(-1/5). Falls back
/// to whichever spread is positive, and to 1 for a constant sample.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 1.0;
    }
    let mut sorted = samples.to_vec();
    math::sort_floats(&mut sorted);
    let sd = math::sqrt(math::variance(samples));
    let iqr = math::quantile_sorted(&sorted, 0.75) - math::quantile_sorted(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => return 1.0,
    };
    0.9 * spread * math::pow(n as f64, -0.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl Kde {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
            .sum()
    }
}

/// Gaussian KDE evaluated on `points` evenly spaced values spanning the
/// sample range padded by four bandwidths on each side.
pub fn gaussian_kde(samples: &[f64], points: usize) -> Option<Kde> {
    if samples.is_empty() || points < 2 {
        return None;
    }
    let h = silverman_bandwidth(samples);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * math::sqrt(2.0 * core::f64::consts::PI));
    let grid: Vec<f64> = (0..points).map(|i| lo + step * i as f64).collect();
    let density = grid
        .iter()
        .map(|&x| {
            norm * samples
                .iter()
                .map(|&s| {
                    let z = (x - s) / h;
                    math::exp(-0.5 * z * z)
                })
                .sum::<f64>()
        })
        .collect();
    Some(Kde { bandwidth: h, grid, density })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxplot_fixture() {
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.q1, b.median, b.q3, b.iqr), (2.0, 3.0, 4.0, 2.0));
        assert_eq!((b.whisker_lo, b.whisker_hi), (-1.0, 7.0));
        assert!(b.outliers.is_empty());
        assert_eq!(b.mean, 3.0);
        assert_eq!(b.mode, 1.0);
    }

    #[test]
    fn constant_and_outlier() {
        let b = boxplot_stats(&[4.0; 6]).unwrap();
        assert_eq!(b.iqr, 0.0);
        assert!(b.outliers.is_empty());
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 1000.0]).unwrap();
        assert_eq!(b.outliers, [1000.0]);
        assert!(boxplot_stats(&[]).is_err());
    }

    #[test]
    fn mode_rounds_and_breaks_ties_low() {
        assert_eq!(rounded_mode(&[6.6, 7.4, 3.0, 3.2]), 3.0);
        assert_eq!(rounded_mode(&[9.9, 10.2, 10.4, 2.0]), 10.0);
    }

    #[test]
    fn kde_is_normalized() {
        for sample in [&[1.0, 2.0, 2.5, 7.0, 12.0][..], &[5.0, 5.0, 5.0], &[3.0]] {
            let k = gaussian_kde(sample, 512).unwrap();
            assert!((k.integral() - 1.0).abs() < 1e-3, "{}", k.integral());
        }
    }
}
