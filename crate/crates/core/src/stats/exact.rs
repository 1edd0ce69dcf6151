//! Exact tests on 2×2 contingency tables.
//!
//! Rows are the two groups (independent binomial samples), columns the
//! outcome: `[[a, b], [c, d]]` means `a` of `a + b` successes in group one
//! and `c` of `c + d` in group two.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::special::{ln_binom_pmf, ln_choose};
use super::StatsError;
use crate::math::exp;

/// Relative slack when comparing probabilities of tables for "as or more extreme".
const REL_TOL: f64 = 1e-7;

pub const DEFAULT_GRID: usize = 1_000;
pub const DEFAULT_CAP: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Table2x2 {
    pub fn new(rows: [[u64; 2]; 2]) -> Self {
        Self { a: rows[0][0], b: rows[0][1], c: rows[1][0], d: rows[1][1] }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn row_totals(&self) -> (u64, u64) {
        (self.a + self.b, self.c + self.d)
    }

    pub fn transposed(&self) -> Self {
        Self { a: self.a, b: self.c, c: self.b, d: self.d }
    }
}

/// Two-sided Fisher exact p: total hypergeometric probability of the tables
/// with the observed margins that are no more likely than the observed one.
pub fn fisher_exact(t: &Table2x2) -> Result<f64, StatsError> {
    if t.total() == 0 {
        return Err(StatsError::Degenerate("empty contingency table".into()));
    }
    Ok(fisher_p(t.a, t.a + t.b, t.c + t.d, t.a + t.c))
}

/// Fisher p for `x` successes in row one given row totals `r1`, `r2` and
/// success total `k`.
fn fisher_p(x: u64, r1: u64, r2: u64, k: u64) -> f64 {
    let n = r1 + r2;
    let lo = k.saturating_sub(r2);
    let hi = r1.min(k);
    if lo == hi {
        return 1.0;
    }
    let denom = ln_choose(n, k);
    let lp = |i: u64| ln_choose(r1, i) + ln_choose(r2, k - i) - denom;
    let observed = lp(x);
    let mut p = 0.0;
    for i in lo..=hi {
        let l = lp(i);
        if l <= observed + REL_TOL {
            p += exp(l);
        }
    }
    p.min(1.0)
}

/// Boschloo's test for two independent binomial samples of fixed sizes.
/// Fisher p-values of every possible outcome table are computed once, so
/// repeated queries for the same sample sizes are cheap.
#[derive(Debug, Clone)]
pub struct Boschloo {
    n1: u64,
    n2: u64,
    grid: Vec<f64>,
    /// (fisher p, x1, x2) sorted ascending by p.
    tables: Vec<(f64, u64, u64)>,
    /// Per grid point, cumulative probability along `tables`. Empty when too
    /// large to keep.
    cumulative: Vec<Vec<f64>>,
}

/// Equally spaced nuisance values strictly inside (0, 1).
pub fn nuisance_grid(size: usize) -> Vec<f64> {
    (1..=size).map(|k| k as f64 / (size + 1) as f64).collect()
}

impl Boschloo {
    pub fn new(n1: u64, n2: u64, grid_size: usize, cap: u64) -> Result<Self, StatsError> {
        if n1 == 0 || n2 == 0 {
            return Err(StatsError::Degenerate("both groups need at least one observation".into()));
        }
        if n1 + n2 > cap {
            return Err(StatsError::TooLarge(alloc::format!(
                "n1 + n2 = {} exceeds the enumeration cap {cap}; raise the cap or reduce the grid",
                n1 + n2
            )));
        }
        if grid_size < 100 {
            return Err(StatsError::Degenerate("nuisance grid needs at least 100 points".into()));
        }
        let mut tables = Vec::with_capacity(((n1 + 1) * (n2 + 1)) as usize);
        for x1 in 0..=n1 {
            for x2 in 0..=n2 {
                tables.push((fisher_p(x1, n1, n2, x1 + x2), x1, x2));
            }
        }
        tables.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let grid = nuisance_grid(grid_size);
        let mut me = Self { n1, n2, grid, tables, cumulative: Vec::new() };
        if me.grid.len() * me.tables.len() <= 4_000_000 {
            me.cumulative = me
                .grid
                .iter()
                .map(|&pi| {
                    let mut acc = 0.0;
                    let (m1, m2) = (me.masses(n1, pi), me.masses(n2, pi));
                    me.tables
                        .iter()
                        .map(|&(_, x1, x2)| {
                            acc += m1[x1 as usize] * m2[x2 as usize];
                            acc
                        })
                        .collect()
                })
                .collect();
        }
        Ok(me)
    }

    fn masses(&self, n: u64, pi: f64) -> Vec<f64> {
        (0..=n).map(|k| exp(ln_binom_pmf(k, n, pi))).collect()
    }

    /// Number of tables at least as extreme as one with Fisher p `p_obs`.
    fn extreme_count(&self, p_obs: f64) -> usize {
        let limit = p_obs * (1.0 + REL_TOL);
        self.tables.partition_point(|t| t.0 <= limit)
    }

    fn mass(&self, pi: f64, count: usize) -> f64 {
        let (m1, m2) = (self.masses(self.n1, pi), self.masses(self.n2, pi));
        self.tables[..count].iter().map(|&(_, x1, x2)| m1[x1 as usize] * m2[x2 as usize]).sum()
    }

    /// p-value for `x1` successes in group one and `x2` in group two.
    pub fn p_value(&self, x1: u64, x2: u64) -> f64 {
        let p_obs = fisher_p(x1, self.n1, self.n2, x1 + x2);
        let count = self.extreme_count(p_obs);
        if count == 0 {
            return 0.0;
        }
        let grid_max = if self.cumulative.is_empty() {
            self.grid.iter().map(|&pi| self.mass(pi, count)).fold(0.0, f64::max)
        } else {
            self.cumulative.iter().map(|c| c[count - 1]).fold(0.0, f64::max)
        };
        let pooled = (x1 + x2) as f64 / (self.n1 + self.n2) as f64;
        let at_pooled = if pooled > 0.0 && pooled < 1.0 { self.mass(pooled, count) } else { 0.0 };
        grid_max.max(at_pooled).min(1.0)
    }
}

/// Boschloo's exact test on one table.
pub fn boschloo_exact(t: &Table2x2, grid_size: usize, cap: u64) -> Result<f64, StatsError> {
    let (n1, n2) = t.row_totals();
    Ok(Boschloo::new(n1, n2, grid_size, cap)?.p_value(t.a, t.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fisher_reference() {
        // two-sided hypergeometric enumeration, frozen from an independent run
        let p = fisher_exact(&Table2x2::new([[1, 9], [11, 3]])).unwrap();
        assert!((p - 0.002_759_456_185_220_083_6).abs() < 1e-12, "{p}");
        let p = fisher_exact(&Table2x2::new([[5, 5], [5, 5]])).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(fisher_exact(&Table2x2::new([[0, 0], [0, 0]])).is_err());
    }

    #[test]
    fn boschloo_limits() {
        assert!(matches!(boschloo_exact(&Table2x2::new([[150, 20], [30, 10]]), 1000, 200), Err(StatsError::TooLarge(_))));
        assert!(boschloo_exact(&Table2x2::new([[0, 0], [3, 1]]), 1000, 200).is_err());
        assert!(boschloo_exact(&Table2x2::new([[1, 2], [3, 1]]), 10, 200).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn boschloo_not_above_fisher(a in 0u64..12, b in 0u64..12, c in 0u64..12, d in 0u64..12) {
            prop_assume!(a + b > 0 && c + d > 0);
            let t = Table2x2::new([[a, b], [c, d]]);
            let f = fisher_exact(&t).unwrap();
            let bo = boschloo_exact(&t, 200, 200).unwrap();
            prop_assert!(bo <= f + 1e-12, "{t:?}: boschloo {bo} fisher {f}");
            prop_assert!((0.0..=1.0).contains(&bo));
        }

        #[test]
        fn fisher_permutation_invariance(a in 0u64..15, b in 0u64..15, c in 0u64..15, d in 0u64..15) {
            prop_assume!(a + b + c + d > 0);
            let p = fisher_exact(&Table2x2::new([[a, b], [c, d]])).unwrap();
            for q in [[[c, d], [a, b]], [[b, a], [d, c]], [[a, c], [b, d]]] {
                prop_assert!((fisher_exact(&Table2x2::new(q)).unwrap() - p).abs() < 1e-10);
            }
        }
    }
}
