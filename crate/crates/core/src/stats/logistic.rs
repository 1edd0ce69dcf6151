//! Maximum-likelihood logistic regression by Newton–Raphson.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::math::{exp, log_sigmoid, sigmoid, sqrt};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(StatsError::Degenerate("ragged design rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.iter().flatten().copied().collect() })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place lower Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky(a: &mut Matrix) -> Result<(), StatsError> {
    let n = a.rows;
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= a.get(j, k) * a.get(j, k);
        }
        if !(d > 1e-12) {
            return Err(StatsError::Singular);
        }
        let d = sqrt(d);
        a.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= a.get(i, k) * a.get(j, k);
            }
            a.set(i, j, s / d);
        }
        for i in 0..j {
            a.set(i, j, 0.0);
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`].
pub(crate) fn chol_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}

/// Bernoulli log-likelihood of `beta` under the logit link.
pub fn logistic_log_likelihood(x: &Matrix, y: &[bool], beta: &[f64]) -> f64 {
    (0..x.rows)
        .map(|i| {
            let eta = dot(x.row(i), beta);
            if y[i] {
                log_sigmoid(eta)
            } else {
                log_sigmoid(-eta)
            }
        })
        .sum()
}

/// Gradient of [`logistic_log_likelihood`] with respect to `beta`.
pub fn logistic_gradient(x: &Matrix, y: &[bool], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.cols];
    for i in 0..x.rows {
        let r = x.row(i);
        let resid = f64::from(u8::from(y[i])) - sigmoid(dot(r, beta));
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += resid * xj;
        }
    }
    g
}

fn information(x: &Matrix, beta: &[f64]) -> Matrix {
    let p = x.cols;
    let mut h = Matrix::zeros(p, p);
    for i in 0..x.rows {
        let r = x.row(i);
        let mu = sigmoid(dot(r, beta));
        let w = mu * (1.0 - mu);
        for a in 0..p {
            for b in 0..=a {
                h.data[a * p + b] += w * r[a] * r[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h.data[b * p + a] = h.data[a * p + b];
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub odds_ratios: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// Coefficient magnitude treated as diverging.
const DIVERGENCE: f64 = 30.0;
const MAX_ITER: usize = 200;

/// Fits `P(y = 1) = sigmoid(x β)` by Newton–Raphson with step halving.
pub fn fit_logistic_ml(x: &Matrix, y: &[bool]) -> Result<LogisticFit, StatsError> {
    if x.rows != y.len() || x.rows == 0 || x.cols == 0 {
        return Err(StatsError::Degenerate("design and outcome sizes differ or are empty".into()));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(StatsError::Separation { index: 0 });
    }
    let mut beta = vec![0.0; x.cols];
    let mut ll = logistic_log_likelihood(x, y, &beta);
    for iter in 1..=MAX_ITER {
        let g = logistic_gradient(x, y, &beta);
        let gnorm = sqrt(dot(&g, &g));
        if gnorm < 1e-8 {
            return finish(x, beta, ll, iter - 1);
        }
        let mut h = information(x, &beta);
        if let Err(e) = cholesky(&mut h) {
            return Err(separation_or(&beta, e));
        }
        let step = chol_solve(&h, &g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let cll = logistic_log_likelihood(x, y, &cand);
            if cll >= ll - 1e-12 || t < 1e-10 {
                beta = cand;
                ll = cll;
                break;
            }
            t *= 0.5;
        }
        if let Some(j) = beta.iter().position(|b| b.abs() > DIVERGENCE) {
            return Err(StatsError::Separation { index: j });
        }
    }
    let g = logistic_gradient(x, y, &beta);
    Err(StatsError::NoConvergence { grad_norm: sqrt(dot(&g, &g)) })
}

fn separation_or(beta: &[f64], e: StatsError) -> StatsError {
    match beta.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())) {
        Some((j, b)) if b.abs() > 10.0 => StatsError::Separation { index: j },
        _ => e,
    }
}

fn finish(x: &Matrix, beta: Vec<f64>, ll: f64, iterations: usize) -> Result<LogisticFit, StatsError> {
    let mut h = information(x, &beta);
    cholesky(&mut h).map_err(|e| separation_or(&beta, e))?;
    let p = x.cols;
    let std_errors: Vec<f64> = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            sqrt(chol_solve(&h, &e)[j])
        })
        .collect();
    // the gradient vanishes as a separated coefficient runs off, so a huge
    // estimate with an even larger standard error means divergence
    if let Some(j) = (0..p).find(|&j| beta[j].abs() > 8.0 && std_errors[j] > 2.0 * beta[j].abs()) {
        return Err(StatsError::Separation { index: j });
    }
    let odds_ratios = beta.iter().map(|b| exp(*b)).collect();
    Ok(LogisticFit { coefficients: beta, std_errors, odds_ratios, log_likelihood: ll, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::standard_normal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(n: usize, beta: &[f64], seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Matrix::zeros(n, beta.len());
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            x.set(i, 0, 1.0);
            for j in 1..beta.len() {
                x.set(i, j, standard_normal(&mut rng));
            }
            let p = sigmoid(dot(x.row(i), beta));
            y.push(rng.random::<f64>() < p);
        }
        (x, y)
    }

    #[test]
    fn recovers_known_coefficients() {
        let truth = [-0.5, 1.2, -0.8];
        let (x, y) = synthetic(5_000, &truth, 11);
        let fit = fit_logistic_ml(&x, &y).unwrap();
        for j in 0..3 {
            let z = (fit.coefficients[j] - truth[j]) / fit.std_errors[j];
            assert!(z.abs() < 3.0, "coef {j}: {} vs {} (se {})", fit.coefficients[j], truth[j], fit.std_errors[j]);
            assert!((fit.odds_ratios[j] - exp(fit.coefficients[j])).abs() < 1e-12);
        }
        let g = logistic_gradient(&x, &y, &fit.coefficients);
        assert!(sqrt(dot(&g, &g)) < 1e-8);
    }

    #[test]
    fn separation_and_trivial_cases() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(fit_logistic_ml(&x, &[true, true, true]), Err(StatsError::Separation { .. })));

        let y: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let x = Matrix::from_rows(&vec![vec![1.0]; 40]).unwrap();
        let fit = fit_logistic_ml(&x, &y).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-10);

        // x perfectly predicts y
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, if i < 10 { -1.0 } else { 1.0 } * (1.0 + i as f64 / 10.0)]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert!(matches!(fit_logistic_ml(&x, &y), Err(StatsError::Separation { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = synthetic(300, &[0.3, -1.0, 0.7, 0.1], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = 1e-5;
        for _ in 0..100 {
            let beta: Vec<f64> = (0..4).map(|_| 2.0 * standard_normal(&mut rng)).collect();
            let g = logistic_gradient(&x, &y, &beta);
            for j in 0..4 {
                let (mut up, mut dn) = (beta.clone(), beta.clone());
                up[j] += h;
                dn[j] -= h;
                let fd = (logistic_log_likelihood(&x, &y, &up) - logistic_log_likelihood(&x, &y, &dn)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1.0);
                assert!(rel < 1e-5, "component {j}: fd {fd} analytic {}", g[j]);
            }
        }
    }

    #[test]
    fn cholesky_solves() {
        let mut a = Matrix::from_rows(&[vec![4.0, 2.0, 0.6], vec![2.0, 5.0, 1.0], vec![0.6, 1.0, 3.0]]).unwrap();
        let orig = a.clone();
        cholesky(&mut a).unwrap();
        let x = chol_solve(&a, &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            assert!((dot(orig.row(i), &x) - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        let mut s = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(cholesky(&mut s), Err(StatsError::Singular));
    }
}
