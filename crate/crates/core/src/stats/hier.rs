//! Random-intercept binary and ordered logit models fitted by
//! Metropolis-within-Gibbs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{cholesky, fit_logistic_ml, Matrix};
use super::ordinal::ordered_log_prob;
use super::posterior::{
    central_interval, hpd_interval, icc, split_rhat, variance_partition_r2, Interval, LOGIT_RESIDUAL_VARIANCE,
};
use super::StatsError;
use crate::math::{exp, ln, log_sigmoid, mean, sqrt, standard_normal, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Outcome {
    Binary,
    Ordered { levels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    Game,
    Participant,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Game => "game",
            Grouping::Participant => "participant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Normal prior SD on coefficients.
    pub coefficient_sd: f64,
    /// Normal prior SD on ordered thresholds.
    pub threshold_sd: f64,
    /// Half-normal scale on random-intercept SDs.
    pub group_sd_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self { coefficient_sd: 2.5, threshold_sd: 2.5, group_sd_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    /// Defaults to half of `iterations`.
    pub warmup: Option<usize>,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { chains: 4, iterations: 5_000, warmup: None, seed: 0 }
    }
}

impl McmcConfig {
    pub fn warmup(&self) -> usize {
        self.warmup.unwrap_or(self.iterations / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierModelSpec {
    pub outcome: Outcome,
    /// All categories of the conversation-type factor, reference included.
    pub categories: Vec<String>,
    pub reference: String,
    pub random_intercepts: Vec<Grouping>,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

/// One observation: a participant's outcome in one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierRow {
    pub category: String,
    pub game: String,
    /// Must be unique across games.
    pub participant: String,
    /// 0/1 for binary outcomes, level index for ordered ones.
    pub outcome: u32,
}

impl HierRow {
    fn group(&self, g: Grouping) -> &str {
        match g {
            Grouping::Game => &self.game,
            Grouping::Participant => &self.participant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Intercept,
    Effect,
    Threshold,
    GroupSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub kind: ParamKind,
    pub mean: f64,
    pub sd: f64,
    /// `exp(mean)`; for SDs this is not meaningful and left as NaN.
    pub odds_ratio: f64,
    pub central: Interval,
    pub hpd: Interval,
    /// Central and HPD intervals mapped through `exp`.
    pub odds_ratio_central: Interval,
    pub odds_ratio_hpd: Interval,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingSummary {
    pub grouping: Grouping,
    pub groups: usize,
    /// Posterior mean of the random-intercept variance.
    pub tau00: f64,
    pub tau00_hpd: Interval,
    pub icc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierFit {
    pub outcome: Outcome,
    pub reference: String,
    pub categories: Vec<String>,
    pub observations: usize,
    pub params: Vec<ParamSummary>,
    pub groupings: Vec<GroupingSummary>,
    pub sigma2: f64,
    pub r2_marginal: f64,
    pub r2_conditional: f64,
    pub max_rhat: f64,
    /// Set when any split-R̂ exceeds the limit; summaries are still reported.
    pub warning: Option<String>,
    pub acceptance: BTreeMap<String, f64>,
    /// Post-warmup draws per parameter, chains concatenated.
    #[serde(skip)]
    pub draws: BTreeMap<String, Vec<f64>>,
}

pub const RHAT_LIMIT: f64 = 1.05;
pub const INTERCEPT: &str = "(Intercept)";

pub fn sd_name(g: Grouping) -> String {
    format!("sd({})", g.as_str())
}

pub fn threshold_name(k: usize) -> String {
    format!("{}|{}", k, k + 1)
}

impl HierFit {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Linear predictor draws of every category (the reference at the
    /// intercept, or 0 in the ordered model), ready for
    /// [`super::posterior_contrasts`].
    pub fn category_draws(&self) -> BTreeMap<String, Vec<f64>> {
        let n = self.draws.values().next().map_or(0, Vec::len);
        let base = self.draws.get(INTERCEPT).cloned().unwrap_or_else(|| vec![0.0; n]);
        self.categories
            .iter()
            .map(|c| {
                let d = match self.draws.get(c) {
                    Some(e) if *c != self.reference => base.iter().zip(e).map(|(a, b)| a + b).collect(),
                    _ => base.clone(),
                };
                (c.clone(), d)
            })
            .collect()
    }
}

/// Moves a location parameter by `d` and the intercepts of `groups` by
/// `sign * d`. Only `impure_rows` see their linear predictor change.
struct ShiftMove {
    grouping: usize,
    /// Coefficients moved together; empty shifts all thresholds instead.
    coefs: Vec<usize>,
    groups: Vec<usize>,
    sign: f64,
    impure_rows: Vec<usize>,
}

fn identity(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    m
}

/// Lower Cholesky factor of the sample covariance, or `None` if degenerate.
fn covariance_factor(xs: &[Vec<f64>]) -> Option<Matrix> {
    let d = xs.first()?.len();
    let n = xs.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let mut c = Matrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let v = xs.iter().map(|x| (x[a] - means[a]) * (x[b] - means[b])).sum::<f64>() / (n - 1.0);
            c.set(a, b, v + if a == b { 1e-8 } else { 0.0 });
        }
    }
    cholesky(&mut c).ok()?;
    Some(c)
}

struct GroupIndex {
    grouping: Grouping,
    of_row: Vec<usize>,
    rows: Vec<Vec<usize>>,
}

/// Validated data and spec, ready to sample.
pub struct HierSampler {
    spec: HierModelSpec,
    y: Vec<u32>,
    /// Coefficient index for each row's category; `None` for the reference.
    effect_of_row: Vec<Option<usize>>,
    /// Rows affected by each coefficient (intercept first for binary).
    coef_rows: Vec<Vec<usize>>,
    coef_names: Vec<String>,
    has_intercept: bool,
    /// Ordered: rows at each level.
    level_rows: Vec<Vec<usize>>,
    groups: Vec<GroupIndex>,
    shifts: Vec<ShiftMove>,
    /// Rows per category, reference first, in `categories` order without the reference.
    category_counts: Vec<usize>,
    init_coef: Vec<f64>,
    init_thresholds: Vec<f64>,
}

pub struct ChainDraws {
    /// `[parameter][draw]` in [`HierSampler::param_names`] order.
    pub params: Vec<Vec<f64>>,
    pub fixed_variance: Vec<f64>,
    pub acceptance: BTreeMap<String, f64>,
}

struct State {
    coef: Vec<f64>,
    thresholds: Vec<f64>,
    u: Vec<Vec<f64>>,
    log_sd: Vec<f64>,
    eta: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Tuner {
    step: f64,
    tried: u32,
    accepted: u32,
    total_tried: u64,
    total_accepted: u64,
}

impl Tuner {
    fn new(step: f64) -> Self {
        Self { step, tried: 0, accepted: 0, total_tried: 0, total_accepted: 0 }
    }

    fn record(&mut self, ok: bool) {
        self.tried += 1;
        self.total_tried += 1;
        if ok {
            self.accepted += 1;
            self.total_accepted += 1;
        }
    }

    fn adapt(&mut self) {
        if self.tried == 0 {
            return;
        }
        let rate = f64::from(self.accepted) / f64::from(self.tried);
        if rate < 0.2 {
            self.step *= if rate < 0.05 { 0.5 } else { 0.8 };
        } else if rate > 0.4 {
            self.step *= if rate > 0.7 { 2.0 } else { 1.25 };
        }
        self.tried = 0;
        self.accepted = 0;
    }

    fn rate(&self) -> f64 {
        if self.total_tried == 0 {
            f64::NAN
        } else {
            self.total_accepted as f64 / self.total_tried as f64
        }
    }

    fn reset_totals(&mut self) {
        self.total_tried = 0;
        self.total_accepted = 0;
    }
}

const ADAPT_EVERY: usize = 50;
const SCALE_REPEATS: usize = 3;

impl HierSampler {
    pub fn new(spec: HierModelSpec, data: &[HierRow]) -> Result<Self, StatsError> {
        let levels = match spec.outcome {
            Outcome::Binary => 2,
            Outcome::Ordered { levels } if levels >= 2 => levels,
            Outcome::Ordered { .. } => return Err(StatsError::InvalidSpec("ordered outcome needs at least 2 levels".into())),
        };
        if data.is_empty() {
            return Err(StatsError::Degenerate("no observations".into()));
        }
        if !spec.categories.contains(&spec.reference) {
            return Err(StatsError::UnknownCategory(spec.reference.clone()));
        }
        let mut seen = spec.categories.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != spec.categories.len() {
            return Err(StatsError::InvalidSpec("duplicate category".into()));
        }
        let mut gs = spec.random_intercepts.clone();
        gs.sort();
        gs.dedup();
        if gs.len() != spec.random_intercepts.len() {
            return Err(StatsError::InvalidSpec("duplicate random intercept".into()));
        }
        let m = &spec.mcmc;
        if m.chains == 0 || m.warmup() >= m.iterations || (m.iterations - m.warmup()) * m.chains < 100 {
            return Err(StatsError::InvalidSpec(
                "need at least one chain, warmup below iterations and 100 retained draws".into(),
            ));
        }
        let p = &spec.priors;
        if !(p.coefficient_sd > 0.0 && p.threshold_sd > 0.0 && p.group_sd_scale > 0.0) {
            return Err(StatsError::InvalidSpec("prior scales must be positive".into()));
        }

        let has_intercept = spec.outcome == Outcome::Binary;
        let effects: Vec<&String> = spec.categories.iter().filter(|c| **c != spec.reference).collect();
        let offset = usize::from(has_intercept);
        let mut coef_names: Vec<String> = Vec::new();
        if has_intercept {
            coef_names.push(INTERCEPT.into());
        }
        coef_names.extend(effects.iter().map(|c| (*c).clone()));
        let mut coef_rows = vec![Vec::new(); coef_names.len()];
        let mut effect_of_row = Vec::with_capacity(data.len());
        let mut level_rows = vec![Vec::new(); levels];
        let mut category_counts = vec![0; effects.len() + 1];
        for (i, r) in data.iter().enumerate() {
            if r.outcome as usize >= levels {
                return Err(StatsError::Degenerate(format!("row {i}: outcome {} out of range", r.outcome)));
            }
            level_rows[r.outcome as usize].push(i);
            if has_intercept {
                coef_rows[0].push(i);
            }
            let e = if r.category == spec.reference {
                category_counts[0] += 1;
                None
            } else {
                let j = effects.iter().position(|c| **c == r.category).ok_or_else(|| StatsError::UnknownCategory(r.category.clone()))?;
                category_counts[j + 1] += 1;
                coef_rows[offset + j].push(i);
                Some(offset + j)
            };
            effect_of_row.push(e);
        }

        let groups: Vec<GroupIndex> = spec
            .random_intercepts
            .iter()
            .map(|&g| {
                let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
                let mut rows: Vec<Vec<usize>> = Vec::new();
                let of_row = data
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let next = ids.len();
                        let k = *ids.entry(r.group(g)).or_insert(next);
                        if k == rows.len() {
                            rows.push(Vec::new());
                        }
                        rows[k].push(i);
                        k
                    })
                    .collect();
                GroupIndex { grouping: g, of_row, rows }
            })
            .collect();

        let mut shifts = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            if !has_intercept {
                let all = (0..g.rows.len()).collect();
                shifts.push(ShiftMove { grouping: gi, coefs: Vec::new(), groups: all, sign: 1.0, impure_rows: Vec::new() });
            }
            // single coefficients, then every distinct set of effects a group spans
            let mut sets: Vec<Vec<usize>> = (0..coef_rows.len()).map(|j| vec![j]).collect();
            for rows in &g.rows {
                let mut sig: Vec<Option<usize>> = rows.iter().map(|i| effect_of_row[*i]).collect();
                sig.sort();
                sig.dedup();
                if sig.len() > 1 && sig.iter().all(Option::is_some) {
                    let set: Vec<usize> = sig.into_iter().flatten().collect();
                    if !sets.contains(&set) {
                        sets.push(set);
                    }
                }
            }
            for set in sets {
                let mut inside = vec![false; data.len()];
                set.iter().flat_map(|j| &coef_rows[*j]).for_each(|i| inside[*i] = true);
                let pure: Vec<usize> = (0..g.rows.len()).filter(|l| g.rows[*l].iter().all(|i| inside[*i])).collect();
                if pure.is_empty() {
                    continue;
                }
                let mut is_pure = vec![false; g.rows.len()];
                pure.iter().for_each(|l| is_pure[*l] = true);
                let impure_rows =
                    (0..data.len()).filter(|i| inside[*i] && !is_pure[g.of_row[*i]]).collect();
                shifts.push(ShiftMove { grouping: gi, coefs: set, groups: pure, sign: -1.0, impure_rows });
            }
        }

        let n = data.len() as f64;
        let (init_coef, init_thresholds) = if has_intercept {
            let mut x = Matrix::zeros(data.len(), coef_names.len());
            for (i, e) in effect_of_row.iter().enumerate() {
                x.set(i, 0, 1.0);
                if let Some(j) = e {
                    x.set(i, *j, 1.0);
                }
            }
            let y: Vec<bool> = data.iter().map(|r| r.outcome == 1).collect();
            let coef = match fit_logistic_ml(&x, &y) {
                Ok(f) if f.coefficients.iter().all(|c| c.abs() < 8.0) => f.coefficients,
                _ => {
                    let ones = y.iter().filter(|v| **v).count() as f64;
                    let mut c = vec![0.0; coef_names.len()];
                    c[0] = ln((ones + 0.5) / (n - ones + 0.5));
                    c
                }
            };
            (coef, Vec::new())
        } else {
            let mut cum = 0.0;
            let th = (0..levels - 1)
                .map(|k| {
                    cum += level_rows[k].len() as f64;
                    let q = (cum + 0.5) / (n + 1.0);
                    ln(q / (1.0 - q))
                })
                .collect::<Vec<_>>();
            let mut th2: Vec<f64> = Vec::with_capacity(th.len());
            for t in th {
                let floor = th2.last().map_or(f64::NEG_INFINITY, |l| l + 0.1);
                th2.push(t.max(floor));
            }
            (vec![0.0; coef_names.len()], th2)
        };

        Ok(Self {
            spec,
            y: data.iter().map(|r| r.outcome).collect(),
            effect_of_row,
            coef_rows,
            coef_names,
            has_intercept,
            level_rows,
            groups,
            shifts,
            category_counts,
            init_coef,
            init_thresholds,
        })
    }

    pub fn spec(&self) -> &HierModelSpec {
        &self.spec
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = self.coef_names.clone();
        v.extend((0..self.init_thresholds.len()).map(threshold_name));
        v.extend(self.groups.iter().map(|g| sd_name(g.grouping)));
        v
    }

    fn row_ll(&self, i: usize, eta: f64, thresholds: &[f64]) -> f64 {
        match self.spec.outcome {
            Outcome::Binary => {
                if self.y[i] == 1 {
                    log_sigmoid(eta)
                } else {
                    log_sigmoid(-eta)
                }
            }
            Outcome::Ordered { .. } => ordered_log_prob(thresholds, eta, self.y[i] as usize),
        }
    }

    fn fixed_eta(&self, i: usize, coef: &[f64]) -> f64 {
        let mut e = if self.has_intercept { coef[0] } else { 0.0 };
        if let Some(j) = self.effect_of_row[i] {
            e += coef[j];
        }
        e
    }

    fn fixed_variance(&self, coef: &[f64]) -> f64 {
        let offset = usize::from(self.has_intercept);
        let n: usize = self.category_counts.iter().sum();
        let val = |k: usize| if k == 0 { 0.0 } else { coef[offset + k - 1] };
        let m = self.category_counts.iter().enumerate().map(|(k, c)| *c as f64 * val(k)).sum::<f64>() / n as f64;
        self.category_counts.iter().enumerate().map(|(k, c)| *c as f64 * (val(k) - m) * (val(k) - m)).sum::<f64>()
            / n as f64
    }

    fn initial_state(&self, rng: &mut ChaCha8Rng) -> State {
        let coef: Vec<f64> = self.init_coef.iter().map(|c| c + 0.5 * standard_normal(rng)).collect();
        let shift = 0.5 * standard_normal(rng);
        let thresholds: Vec<f64> = self.init_thresholds.iter().map(|t| t + shift).collect();
        let log_sd: Vec<f64> = self.groups.iter().map(|_| ln(0.5) + 0.5 * standard_normal(rng)).collect();
        let u: Vec<Vec<f64>> = self.groups.iter().map(|g| vec![0.0; g.rows.len()]).collect();
        let eta = (0..self.y.len()).map(|i| self.fixed_eta(i, &coef)).collect();
        State { coef, thresholds, u, log_sd, eta }
    }

    fn accept(rng: &mut ChaCha8Rng, log_ratio: f64) -> bool {
        log_ratio >= 0.0 || ln(rng.random::<f64>()) < log_ratio
    }

    /// Runs chain `chain` (0-based); chains are independent streams of the seed.
    pub fn run_chain(&self, chain: usize) -> ChainDraws {
        let mcmc = self.spec.mcmc;
        let pri = self.spec.priors;
        let mut rng = ChaCha8Rng::seed_from_u64(mcmc.seed);
        rng.set_stream(chain as u64 + 1);
        let mut s = self.initial_state(&mut rng);
        let ng = self.groups.len();
        let mut coef_t = vec![Tuner::new(0.2); s.coef.len()];
        let mut thr_t = vec![Tuner::new(0.2); s.thresholds.len()];
        let mut u_t = vec![Tuner::new(0.5); ng];
        let mut sd_t = vec![Tuner::new(0.3); ng];
        let mut scale_t = vec![Tuner::new(0.2); ng];
        let mut shift_t = vec![Tuner::new(0.3); self.shifts.len()];
        let mut block_t = Tuner::new(0.05);
        let mut block_l = identity(s.coef.len() + s.thresholds.len());
        let mut block_shaped = false;
        let mut history: Vec<Vec<f64>> = Vec::new();

        let warmup = mcmc.warmup();
        let keep = mcmc.iterations - warmup;
        let n_params = s.coef.len() + s.thresholds.len() + ng;
        let mut params: Vec<Vec<f64>> = (0..n_params).map(|_| Vec::with_capacity(keep)).collect();
        let mut fixed_variance = Vec::with_capacity(keep);
        let coef_prec = 1.0 / (pri.coefficient_sd * pri.coefficient_sd);
        let thr_prec = 1.0 / (pri.threshold_sd * pri.threshold_sd);
        let hn_prec = 1.0 / (pri.group_sd_scale * pri.group_sd_scale);

        for iter in 0..mcmc.iterations {
            // fixed effects
            for j in 0..s.coef.len() {
                let d = coef_t[j].step * standard_normal(&mut rng);
                let old = s.coef[j];
                let new = old + d;
                let mut lr = 0.5 * coef_prec * (old * old - new * new);
                for &i in &self.coef_rows[j] {
                    lr += self.row_ll(i, s.eta[i] + d, &s.thresholds) - self.row_ll(i, s.eta[i], &s.thresholds);
                }
                let ok = Self::accept(&mut rng, lr);
                coef_t[j].record(ok);
                if ok {
                    s.coef[j] = new;
                    for &i in &self.coef_rows[j] {
                        s.eta[i] += d;
                    }
                }
            }
            // thresholds; only rows at the two adjacent levels depend on threshold k
            for k in 0..s.thresholds.len() {
                let old = s.thresholds[k];
                let new = old + thr_t[k].step * standard_normal(&mut rng);
                let lo = if k == 0 { f64::NEG_INFINITY } else { s.thresholds[k - 1] };
                let hi = s.thresholds.get(k + 1).copied().unwrap_or(f64::INFINITY);
                if !(new > lo && new < hi) {
                    thr_t[k].record(false);
                    continue;
                }
                let mut cand = s.thresholds.clone();
                cand[k] = new;
                let mut lr = 0.5 * thr_prec * (old * old - new * new);
                for &i in self.level_rows[k].iter().chain(&self.level_rows[k + 1]) {
                    lr += self.row_ll(i, s.eta[i], &cand) - self.row_ll(i, s.eta[i], &s.thresholds);
                }
                let ok = Self::accept(&mut rng, lr);
                thr_t[k].record(ok);
                if ok {
                    s.thresholds = cand;
                }
            }
            for (gi, g) in self.groups.iter().enumerate() {
                let sd = exp(s.log_sd[gi]);
                let prec = 1.0 / (sd * sd);
                // random intercepts, one group at a time
                for (l, rows) in g.rows.iter().enumerate() {
                    let old = s.u[gi][l];
                    let d = u_t[gi].step * standard_normal(&mut rng);
                    let new = old + d;
                    let mut lr = 0.5 * prec * (old * old - new * new);
                    for &i in rows {
                        lr += self.row_ll(i, s.eta[i] + d, &s.thresholds) - self.row_ll(i, s.eta[i], &s.thresholds);
                    }
                    let ok = Self::accept(&mut rng, lr);
                    u_t[gi].record(ok);
                    if ok {
                        s.u[gi][l] = new;
                        for &i in rows {
                            s.eta[i] += d;
                        }
                    }
                }
                // group SD on the log scale, half-normal prior plus Jacobian
                let ss: f64 = s.u[gi].iter().map(|v| v * v).sum();
                let lg = g.rows.len() as f64;
                let log_target = |ls: f64| {
                    let sd = exp(ls);
                    -lg * ls - 0.5 * ss / (sd * sd) - 0.5 * hn_prec * sd * sd + ls
                };
                let old = s.log_sd[gi];
                let new = old + sd_t[gi].step * standard_normal(&mut rng);
                let ok = Self::accept(&mut rng, log_target(new) - log_target(old));
                sd_t[gi].record(ok);
                if ok {
                    s.log_sd[gi] = new;
                }
                // joint rescale of SD and intercepts, moves along the funnel
                for _ in 0..SCALE_REPEATS {
                    let d = scale_t[gi].step * standard_normal(&mut rng);
                    let f = exp(d);
                    let (sd_old, sd_new) = (exp(s.log_sd[gi]), exp(s.log_sd[gi] + d));
                    let mut lr = d - 0.5 * hn_prec * (sd_new * sd_new - sd_old * sd_old);
                    for (i, eta) in s.eta.iter().enumerate() {
                        let du = s.u[gi][g.of_row[i]] * (f - 1.0);
                        lr += self.row_ll(i, eta + du, &s.thresholds) - self.row_ll(i, *eta, &s.thresholds);
                    }
                    let ok = Self::accept(&mut rng, lr);
                    scale_t[gi].record(ok);
                    if ok {
                        for (i, eta) in s.eta.iter_mut().enumerate() {
                            *eta += s.u[gi][g.of_row[i]] * (f - 1.0);
                        }
                        s.u[gi].iter_mut().for_each(|v| *v *= f);
                        s.log_sd[gi] += d;
                    }
                }
            }

            // location shifts traded against random intercepts
            for (m, t) in self.shifts.iter().zip(&mut shift_t) {
                let d = t.step * standard_normal(&mut rng);
                let du = m.sign * d;
                let sd = exp(s.log_sd[m.grouping]);
                let u = &s.u[m.grouping];
                let sum_u: f64 = m.groups.iter().map(|l| u[*l]).sum();
                // sum (u + du)^2 - u^2 = 2 du sum_u + L du^2
                let mut lr = -0.5 * (2.0 * du * sum_u + m.groups.len() as f64 * du * du) / (sd * sd);
                if m.coefs.is_empty() {
                    lr += 0.5 * thr_prec * s.thresholds.iter().map(|t| t * t - (t + d) * (t + d)).sum::<f64>();
                }
                for &j in &m.coefs {
                    let (o, n) = (s.coef[j], s.coef[j] + d);
                    lr += 0.5 * coef_prec * (o * o - n * n);
                }
                for &i in &m.impure_rows {
                    lr += self.row_ll(i, s.eta[i] + d, &s.thresholds) - self.row_ll(i, s.eta[i], &s.thresholds);
                }
                let ok = Self::accept(&mut rng, lr);
                t.record(ok);
                if ok {
                    if m.coefs.is_empty() {
                        // every row moves with its intercept; the likelihood does not change
                        s.thresholds.iter_mut().for_each(|t| *t += d);
                        s.eta.iter_mut().for_each(|e| *e += du);
                    }
                    for &j in &m.coefs {
                        s.coef[j] += d;
                    }
                    for &l in &m.groups {
                        s.u[m.grouping][l] += du;
                    }
                    for &i in &m.impure_rows {
                        s.eta[i] += d;
                    }
                }
            }
            // all fixed effects (and thresholds) at once, proposal shaped by
            // the warmup covariance
            let nc = s.coef.len();
            let dim = nc + s.thresholds.len();
            if dim > 1 {
                let z: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
                let delta: Vec<f64> = (0..dim)
                    .map(|a| block_t.step * (0..=a).map(|b| block_l.get(a, b) * z[b]).sum::<f64>())
                    .collect();
                let cand: Vec<f64> = s.thresholds.iter().zip(&delta[nc..]).map(|(t, d)| t + d).collect();
                if cand.windows(2).all(|w| w[0] < w[1]) {
                    let mut lr: f64 =
                        0.5 * coef_prec * s.coef.iter().zip(&delta).map(|(c, d)| c * c - (c + d) * (c + d)).sum::<f64>();
                    lr += 0.5 * thr_prec * s.thresholds.iter().zip(&cand).map(|(o, n)| o * o - n * n).sum::<f64>();
                    let shift = |i: usize| {
                        let mut e = if self.has_intercept { delta[0] } else { 0.0 };
                        if let Some(j) = self.effect_of_row[i] {
                            e += delta[j];
                        }
                        e
                    };
                    for (i, eta) in s.eta.iter().enumerate() {
                        lr += self.row_ll(i, eta + shift(i), &cand) - self.row_ll(i, *eta, &s.thresholds);
                    }
                    let ok = Self::accept(&mut rng, lr);
                    block_t.record(ok);
                    if ok {
                        s.coef.iter_mut().zip(&delta).for_each(|(c, d)| *c += d);
                        s.thresholds = cand;
                        for (i, eta) in s.eta.iter_mut().enumerate() {
                            *eta += shift(i);
                        }
                    }
                } else {
                    block_t.record(false);
                }
                if iter < warmup {
                    history.push(s.coef.iter().chain(&s.thresholds).copied().collect());
                }
            }

            if iter < warmup && (iter + 1) % ADAPT_EVERY == 0 {
                coef_t.iter_mut().chain(&mut thr_t).chain(&mut u_t).chain(&mut sd_t).chain(&mut scale_t).chain(&mut shift_t).for_each(Tuner::adapt);
                block_t.adapt();
                if history.len() >= 200 {
                    if let Some(l) = covariance_factor(&history[history.len() / 2..]) {
                        if !block_shaped {
                            block_t.step = 2.38 / sqrt(dim as f64);
                            block_shaped = true;
                        }
                        block_l = l;
                    }
                }
            }
            if iter + 1 == warmup {
                coef_t.iter_mut().chain(&mut thr_t).chain(&mut u_t).chain(&mut sd_t).chain(&mut scale_t).chain(&mut shift_t).for_each(Tuner::reset_totals);
                block_t.reset_totals();
            }
            if iter >= warmup {
                let vals = s.coef.iter().chain(&s.thresholds).copied().chain(s.log_sd.iter().map(|l| exp(*l)));
                for (p, v) in params.iter_mut().zip(vals) {
                    p.push(v);
                }
                fixed_variance.push(self.fixed_variance(&s.coef));
            }
        }

        let mut acceptance = BTreeMap::new();
        for (name, t) in self.coef_names.iter().zip(&coef_t) {
            acceptance.insert(name.clone(), t.rate());
        }
        for (k, t) in thr_t.iter().enumerate() {
            acceptance.insert(threshold_name(k), t.rate());
        }
        for (g, gi) in self.groups.iter().zip(0..) {
            let n = g.grouping.as_str();
            acceptance.insert(format!("u({n})"), u_t[gi].rate());
            acceptance.insert(sd_name(g.grouping), sd_t[gi].rate());
            acceptance.insert(format!("scale({n})"), scale_t[gi].rate());
        }
        for (m, t) in self.shifts.iter().zip(&shift_t) {
            let what = if m.coefs.is_empty() {
                String::from("thresholds")
            } else {
                m.coefs.iter().map(|j| self.coef_names[*j].as_str()).collect::<Vec<_>>().join("+")
            };
            acceptance.insert(format!("shift({}:{what})", self.groups[m.grouping].grouping.as_str()), t.rate());
        }
        if s.coef.len() + s.thresholds.len() > 1 {
            acceptance.insert("fixed(block)".into(), block_t.rate());
        }
        ChainDraws { params, fixed_variance, acceptance }
    }

    /// Pools chains into the posterior summary.
    pub fn summarize(&self, chains: Vec<ChainDraws>) -> Result<HierFit, StatsError> {
        let names = self.param_names();
        let n_coef = self.coef_names.len();
        let n_thr = self.init_thresholds.len();
        let mut params = Vec::new();
        let mut draws = BTreeMap::new();
        let mut max_rhat: f64 = 1.0;
        for (k, name) in names.iter().enumerate() {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.params[k].clone()).collect();
            let pooled: Vec<f64> = per_chain.concat();
            let rhat = split_rhat(&per_chain);
            if rhat.is_finite() {
                max_rhat = max_rhat.max(rhat);
            } else if chains.len() > 1 || per_chain[0].len() >= 4 {
                max_rhat = f64::INFINITY;
            }
            let kind = if k < n_coef {
                if self.has_intercept && k == 0 { ParamKind::Intercept } else { ParamKind::Effect }
            } else if k < n_coef + n_thr {
                ParamKind::Threshold
            } else {
                ParamKind::GroupSd
            };
            let central = central_interval(&pooled, 0.95)?;
            let hpd = hpd_interval(&pooled, 0.95)?;
            let m = mean(&pooled);
            let or = |i: Interval| Interval { lower: exp(i.lower), upper: exp(i.upper) };
            let is_sd = kind == ParamKind::GroupSd;
            params.push(ParamSummary {
                name: name.clone(),
                kind,
                mean: m,
                sd: sqrt(variance(&pooled)),
                odds_ratio: if is_sd { f64::NAN } else { exp(m) },
                central,
                hpd,
                odds_ratio_central: if is_sd { nan_interval() } else { or(central) },
                odds_ratio_hpd: if is_sd { nan_interval() } else { or(hpd) },
                rhat,
            });
            draws.insert(name.clone(), pooled);
        }

        let sigma2 = LOGIT_RESIDUAL_VARIANCE;
        let tau_draws: Vec<Vec<f64>> = self
            .groups
            .iter()
            .map(|g| draws[&sd_name(g.grouping)].iter().map(|s| s * s).collect())
            .collect();
        let tau_means: Vec<f64> = tau_draws.iter().map(|t| mean(t)).collect();
        let iccs = icc(&tau_means, sigma2)?;
        let groupings = self
            .groups
            .iter()
            .zip(&tau_draws)
            .zip(&iccs)
            .map(|((g, t), icc)| {
                Ok(GroupingSummary {
                    grouping: g.grouping,
                    groups: g.rows.len(),
                    tau00: mean(t),
                    tau00_hpd: hpd_interval(t, 0.95)?,
                    icc: *icc,
                })
            })
            .collect::<Result<Vec<_>, StatsError>>()?;

        let fv: Vec<f64> = chains.iter().flat_map(|c| c.fixed_variance.iter().copied()).collect();
        let (mut r2m, mut r2c) = (0.0, 0.0);
        for (d, f) in fv.iter().enumerate() {
            let tau: f64 = tau_draws.iter().map(|t| t[d]).sum();
            let (m, c) = variance_partition_r2(*f, tau, sigma2);
            r2m += m;
            r2c += c;
        }
        let nd = fv.len() as f64;

        let mut acceptance: BTreeMap<String, f64> = BTreeMap::new();
        for c in &chains {
            for (k, v) in &c.acceptance {
                *acceptance.entry(k.clone()).or_default() += v / chains.len() as f64;
            }
        }
        let warning = (max_rhat > RHAT_LIMIT).then(|| {
            let worst: Vec<&str> =
                params.iter().filter(|p| !(p.rhat <= RHAT_LIMIT)).map(|p| p.name.as_str()).collect();
            format!("split-R̂ above {RHAT_LIMIT} for {}", worst.join(", "))
        });

        Ok(HierFit {
            outcome: self.spec.outcome,
            reference: self.spec.reference.clone(),
            categories: self.spec.categories.clone(),
            observations: self.y.len(),
            params,
            groupings,
            sigma2,
            r2_marginal: r2m / nd,
            r2_conditional: r2c / nd,
            max_rhat,
            warning,
            acceptance,
            draws,
        })
    }
}

fn nan_interval() -> Interval {
    Interval { lower: f64::NAN, upper: f64::NAN }
}

/// Fits the model, running the chains one after another.
pub fn fit_hierarchical(spec: &HierModelSpec, data: &[HierRow]) -> Result<HierFit, StatsError> {
    let sampler = HierSampler::new(spec.clone(), data)?;
    let chains = (0..spec.mcmc.chains).map(|c| sampler.run_chain(c)).collect();
    sampler.summarize(chains)
}

#[cfg(test)]
mod tests;
