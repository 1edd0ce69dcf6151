//! Special functions behind the test statistics.

use crate::math::{exp, ln, ln_gamma};

const EPS: f64 = 1e-15;
const TINY: f64 = 1e-300;

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = f64::from(m);
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * ln(x) + b * ln(1.0 - x);
    let front = exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Student's t CDF.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// `ln(n choose k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Log of the binomial probability mass; handles `p` of exactly 0 or 1.
pub fn ln_binom_pmf(k: u64, n: u64, p: f64) -> f64 {
    let lc = ln_choose(n, k);
    let a = if k == 0 { 0.0 } else if p <= 0.0 { f64::NEG_INFINITY } else { k as f64 * ln(p) };
    let b = if k == n { 0.0 } else if p >= 1.0 { f64::NEG_INFINITY } else { (n - k) as f64 * crate::math::ln_1p(-p) };
    lc + a + b
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn incomplete_beta_reference_points() {
        assert!((inc_beta(2.0, 3.0, 0.4) - 0.5248).abs() < 1e-12);
        assert!((inc_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-14);
        assert!((inc_beta(0.5, 0.5, 0.5) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn t_tail_agrees_with_statrs() {
        for df in [1.0, 2.5, 8.0, 30.0, 300.0] {
            let d = StudentsT::new(0.0, 1.0, df).unwrap();
            for t in [-4.0, -1.0, -0.1, 0.0, 0.7, 2.0, 6.0] {
                assert!((student_t_cdf(t, df) - d.cdf(t)).abs() < 1e-10, "df {df} t {t}");
            }
        }
    }

    #[test]
    fn binomial_mass_sums_to_one() {
        for p in [0.0, 0.2, 0.5, 1.0] {
            let s: f64 = (0..=12).map(|k| exp(ln_binom_pmf(k, 12, p))).sum();
            assert!((s - 1.0).abs() < 1e-12, "{p}");
        }
    }
}
