//! Post-game analysis over replayed logs: every metric and model that the
//! logs support, emitted as one JSON report plus CSV tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use consensus_core::agent::{Grammar, Personality};
use consensus_core::engine::GameState;
use consensus_core::metrics::{
    boxplot_stats, change_records, detect_ai_flags, distribution_summaries, flag_effects,
    gaussian_kde, participant_text, persuasiveness, persuasiveness_by_persona, tabulate_opinion_changes,
    timing_samples, ChangeRecord, ChangeRow, FlagEffects, FlagSplit, KeywordDictionary, StopWords, TimingGroup,
};
use consensus_core::stats::{
    boschloo_exact, fisher_exact, fit_hierarchical, posterior_contrasts, welch_t_test, Grouping, HierFit,
    HierModelSpec, HierRow, Interval, McmcConfig, Outcome, Priors, Table2x2, TTestResult, DEFAULT_CAP, DEFAULT_GRID,
};
use consensus_core::{AssignmentType, Condition, ParticipantKind};
use serde::Serialize;
use serde_json::{json, Value};

use crate::eventlog::{log_files, read_log, replay};

pub const REPORT_VERSION: u32 = 1;
const KDE_POINTS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub present: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
}

impl Section {
    fn present(data: Value) -> Self {
        Self { present: true, reason: None, data: Some(data) }
    }

    fn absent(reason: impl Into<String>) -> Self {
        Self { present: false, reason: Some(reason.into()), data: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub report_version: u32,
    pub status: Status,
    pub warnings: Vec<String>,
    /// Games per condition.
    pub games: BTreeMap<String, usize>,
    pub sections: BTreeMap<String, Section>,
}

impl Report {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub mcmc: McmcConfig,
    pub fit_models: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self { mcmc: McmcConfig { chains: 4, iterations: 2_000, warmup: None, seed: 1 }, fit_models: true }
    }
}

/// Replays every log in `dir`. Logs that fail validation are errors; cut-off
/// tails come back as warnings.
pub fn load_games(dir: &Path) -> anyhow::Result<(Vec<GameState>, Vec<String>)> {
    let files = log_files(dir).map_err(|e| anyhow::anyhow!("{}: {e}", dir.display()))?;
    if files.is_empty() {
        anyhow::bail!("no .jsonl logs in {}", dir.display());
    }
    let mut games = Vec::with_capacity(files.len());
    let mut warnings = Vec::new();
    for f in files {
        let log = read_log(&f)?;
        warnings.extend(log.warnings.iter().cloned());
        games.push(replay(&log).map_err(|e| anyhow::anyhow!("{}: {e}", f.display()))?);
    }
    Ok((games, warnings))
}

fn f(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn welch(a: &[f64], b: &[f64]) -> Value {
    match welch_t_test(a, b) {
        Ok(TTestResult { t, df, p }) => json!({ "t": t, "df": df, "p": p, "n_a": a.len(), "n_b": b.len() }),
        Err(e) => json!({ "skipped": e.to_string(), "n_a": a.len(), "n_b": b.len() }),
    }
}

fn mean_or_null(xs: &[f64]) -> Value {
    if xs.is_empty() {
        Value::Null
    } else {
        json!(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

struct Builder {
    sections: BTreeMap<String, Section>,
    warnings: Vec<String>,
    tables: Vec<CsvTable>,
}

impl Builder {
    fn put(&mut self, name: &str, s: Section) {
        if let Some(r) = &s.reason {
            self.warnings.push(format!("section {name} absent: {r}"));
        }
        self.sections.insert(name.to_string(), s);
    }
}

pub fn analyze(games: &[GameState], opts: &AnalyzeOptions) -> (Report, Vec<CsvTable>) {
    let mut b = Builder { sections: BTreeMap::new(), warnings: Vec::new(), tables: Vec::new() };
    let dict = KeywordDictionary::default();
    let stop = StopWords::default();
    let has = |c: Condition| games.iter().any(|g| g.config.condition == c);
    let records: Vec<ChangeRecord> = games.iter().flat_map(change_records).collect();

    opinion_change_section(&mut b, games, &records);
    timing_sections(&mut b, games);
    keyword_section(&mut b, games, &dict, &stop);
    let bot_human: Vec<&GameState> = games.iter().filter(|g| g.config.condition == Condition::BotHuman).collect();
    if has(Condition::BotHuman) {
        flag_section(&mut b, &bot_human, &dict);
        persuasiveness_section(&mut b, &bot_human);
        exit_survey_section(&mut b, &bot_human);
    } else {
        for s in ["ai_flags", "persuasiveness", "exit_survey"] {
            b.put(s, Section::absent("no bot-human games in the logs"));
        }
    }
    perceived_section(&mut b, &records);
    distribution_section(&mut b, games);
    if opts.fit_models {
        model_sections(&mut b, &records, &opts.mcmc);
    } else {
        for s in ["model_opinion_change", "model_perceived_confidence", "model_personal_confidence_change"] {
            b.put(s, Section::absent("model fitting disabled"));
        }
    }

    let mut per_condition = BTreeMap::new();
    for g in games {
        *per_condition.entry(g.config.condition.as_str().to_string()).or_default() += 1;
    }
    let status = if b.warnings.is_empty() { Status::Ok } else { Status::Warning };
    let report =
        Report { report_version: REPORT_VERSION, status, warnings: b.warnings, games: per_condition, sections: b.sections };
    (report, b.tables)
}

fn opinion_change_section(b: &mut Builder, games: &[GameState], records: &[ChangeRecord]) {
    let table = tabulate_opinion_changes(games);
    let rows = table.rows();
    let mut csv = CsvTable::new("opinion_change", &["condition", "row", "changed", "unchanged", "total"]);
    for r in &rows {
        csv.push(vec![
            r.condition.as_str().into(),
            r.label.clone(),
            r.changed.to_string(),
            r.unchanged.to_string(),
            (r.changed + r.unchanged).to_string(),
        ]);
    }
    let total: u32 = rows.iter().map(|r| r.changed + r.unchanged).sum();
    b.tables.push(csv);
    b.put(
        "opinion_change",
        Section::present(json!({
            "rows": rows,
            "completed_reevaluations": records.len(),
            "table_total": total,
            "conserved": total as usize == records.len(),
        })),
    );
}

fn timing_sections(b: &mut Builder, games: &[GameState]) {
    let samples = match timing_samples(games) {
        Ok(s) => s,
        Err(e) => {
            for g in TimingGroup::ALL {
                b.put(&format!("timing_{}", g.as_str()), Section::absent(format!("malformed conversation: {e}")));
            }
            return;
        }
    };
    let mut csv = CsvTable::new(
        "timing_boxplots",
        &["group", "measure", "n", "q1", "median", "q3", "whisker_lo", "whisker_hi", "mean", "mode", "outliers"],
    );
    let mut raw = CsvTable::new("timing_samples", &["group", "measure", "seconds"]);
    for g in TimingGroup::ALL {
        let name = format!("timing_{}", g.as_str());
        let Some(t) = samples.get(&g) else {
            b.put(&name, Section::absent(format!("no {} conversations", g.as_str())));
            continue;
        };
        let mut data = serde_json::Map::new();
        data.insert("messages".into(), json!(t.messages));
        data.insert("chains".into(), json!(t.chains));
        for (measure, xs) in [("holding_period_s", &t.holding), ("response_time_s", &t.response)] {
            for x in xs {
                raw.push(vec![g.as_str().into(), measure.into(), f(*x)]);
            }
            match boxplot_stats(xs) {
                Ok(s) => {
                    csv.push(vec![
                        g.as_str().into(),
                        measure.into(),
                        s.n.to_string(),
                        f(s.q1),
                        f(s.median),
                        f(s.q3),
                        f(s.whisker_lo),
                        f(s.whisker_hi),
                        f(s.mean),
                        f(s.mode),
                        s.outliers.len().to_string(),
                    ]);
                    data.insert(measure.into(), json!(s));
                }
                Err(_) => {
                    data.insert(measure.into(), Value::Null);
                }
            }
        }
        b.put(&name, Section::present(Value::Object(data)));
    }
    let mut tests = serde_json::Map::new();
    for (x, y) in [(TimingGroup::HO, TimingGroup::BH), (TimingGroup::HH, TimingGroup::BH), (TimingGroup::HO, TimingGroup::HH)] {
        if let (Some(a), Some(c)) = (samples.get(&x), samples.get(&y)) {
            tests.insert(
                format!("{}_vs_{}", x.as_str(), y.as_str()),
                json!({ "holding_period_s": welch(&a.holding, &c.holding), "response_time_s": welch(&a.response, &c.response) }),
            );
        }
    }
    if !tests.is_empty() {
        b.put("timing_tests", Section::present(Value::Object(tests)));
    }
    b.tables.push(csv);
    b.tables.push(raw);
}

fn keyword_section(b: &mut Builder, games: &[GameState], dict: &KeywordDictionary, stop: &StopWords) {
    let mut csv = CsvTable::new(
        "participant_text",
        &["game_id", "condition", "participant", "kind", "messages", "keywords", "unique_words"],
    );
    let mut by: BTreeMap<(Condition, ParticipantKind), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut per_keyword: BTreeMap<ParticipantKind, BTreeMap<String, u32>> = BTreeMap::new();
    for g in games {
        for p in participant_text(g, dict, stop) {
            csv.push(vec![
                p.game_id.clone(),
                p.condition.as_str().into(),
                p.participant.0.to_string(),
                kind_str(p.kind).into(),
                p.messages.to_string(),
                p.keywords.to_string(),
                p.unique_words.to_string(),
            ]);
            let e = by.entry((p.condition, p.kind)).or_default();
            e.0.push(f64::from(p.keywords));
            e.1.push(f64::from(p.unique_words));
        }
        for conv in &g.conversations {
            for m in &conv.messages {
                let counts = consensus_core::metrics::keyword_counts(&m.text, dict);
                let slot = per_keyword.entry(g.kind_of(m.sender)).or_default();
                for (k, n) in counts.per_keyword {
                    *slot.entry(k).or_default() += n;
                }
            }
        }
    }
    let groups: Vec<Value> = by
        .iter()
        .map(|((c, k), (kw, uw))| {
            json!({
                "condition": c.as_str(),
                "kind": kind_str(*k),
                "participants": kw.len(),
                "mean_keywords": mean_or_null(kw),
                "mean_unique_words": mean_or_null(uw),
            })
        })
        .collect();
    let pick = |c, k| by.get(&(c, k)).cloned().unwrap_or_default();
    let (bh_bot, bh_human) = (pick(Condition::BotHuman, ParticipantKind::Bot), pick(Condition::BotHuman, ParticipantKind::Human));
    let ho = pick(Condition::HumanOnly, ParticipantKind::Human);
    let mut tests = serde_json::Map::new();
    if !bh_bot.0.is_empty() && !bh_human.0.is_empty() {
        tests.insert(
            "bot_vs_human_in_bot_human".into(),
            json!({ "keywords": welch(&bh_bot.0, &bh_human.0), "unique_words": welch(&bh_bot.1, &bh_human.1) }),
        );
    }
    if !ho.0.is_empty() && !bh_human.0.is_empty() {
        tests.insert(
            "human_only_vs_bot_human_humans".into(),
            json!({ "keywords": welch(&ho.0, &bh_human.0), "unique_words": welch(&ho.1, &bh_human.1) }),
        );
    }
    b.tables.push(csv);
    b.put(
        "keywords",
        Section::present(json!({
            "dictionary_size": dict.len(),
            "groups": groups,
            "per_keyword": per_keyword,
            "tests": tests,
        })),
    );
}

fn kind_str(k: ParticipantKind) -> &'static str {
    match k {
        ParticipantKind::Human => "human",
        ParticipantKind::Bot => "bot",
    }
}

fn merge(into: &mut FlagSplit<f64>, from: &FlagSplit<f64>) {
    into.before.extend(&from.before);
    into.after.extend(&from.after);
}

fn split_json(s: &FlagSplit<f64>) -> Value {
    json!({
        "before": { "n": s.before.len(), "mean": mean_or_null(&s.before) },
        "after": { "n": s.after.len(), "mean": mean_or_null(&s.after) },
        "welch": if s.before.is_empty() || s.after.is_empty() { Value::Null } else { welch(&s.before, &s.after) },
    })
}

fn flag_section(b: &mut Builder, games: &[&GameState], dict: &KeywordDictionary) {
    let mut incidents = 0;
    let mut tokens: BTreeMap<String, u32> = BTreeMap::new();
    let mut flagged_games = Vec::new();
    let mut all = FlagEffects::default();
    let mut csv = CsvTable::new("ai_flags", &["game_id", "conversation", "sender", "token", "at_s"]);
    for g in games {
        let flags = detect_ai_flags(g);
        for fl in &flags {
            csv.push(vec![
                g.game_id.clone(),
                fl.conversation.0.to_string(),
                fl.sender.0.to_string(),
                fl.token.clone(),
                f(fl.at_ms as f64 / 1000.0),
            ]);
            *tokens.entry(fl.token.clone()).or_default() += 1;
        }
        incidents += flags.len();
        if let Some(fx) = flag_effects(g, dict) {
            flagged_games.push(json!({ "game_id": g.game_id, "first_flag_s": flags[0].at_ms as f64 / 1000.0 }));
            merge(&mut all.change_rate, &fx.change_rate);
            merge(&mut all.perceived, &fx.perceived);
            merge(&mut all.personal, &fx.personal);
            merge(&mut all.keywords, &fx.keywords);
        }
    }
    let nonzero = FlagSplit {
        before: all.perceived.before.iter().copied().filter(|x| *x > 0.0).collect(),
        after: all.perceived.after.iter().copied().filter(|x| *x > 0.0).collect(),
    };
    b.tables.push(csv);
    b.put(
        "ai_flags",
        Section::present(json!({
            "bot_human_games": games.len(),
            "incidents": incidents,
            "by_token": tokens,
            "flagged_games": flagged_games,
            "before_after": {
                "opinion_change_rate": split_json(&all.change_rate),
                "perceived_confidence_with_zeros": split_json(&all.perceived),
                "perceived_confidence_without_zeros": split_json(&nonzero),
                "personal_confidence": split_json(&all.personal),
                "keywords_per_message": split_json(&all.keywords),
            },
        })),
    );
}

fn persuasiveness_section(b: &mut Builder, games: &[&GameState]) {
    let p = persuasiveness(games.iter().copied());
    if p.records.is_empty() {
        b.put("persuasiveness", Section::absent("no bot-human conversation with a human re-evaluation"));
        return;
    }
    let by = persuasiveness_by_persona(&p.records);
    let mut csv = CsvTable::new("persuasiveness", &["personality", "grammar", "conversations", "mean_score", "percent"]);
    let mut grid = Vec::new();
    for personality in Personality::ALL {
        for grammar in Grammar::ALL {
            let cell = by.iter().find(|(k, _)| k.personality == personality && k.grammar == grammar).map(|(_, v)| *v);
            let (n, mean, pct) = cell.map_or((0, f64::NAN, f64::NAN), |c| (c.conversations, c.mean_score, c.percent));
            csv.push(vec![personality.key().into(), grammar.key().into(), n.to_string(), f(mean), f(pct)]);
            grid.push(json!({
                "personality": personality.key(),
                "grammar": grammar.key(),
                "conversations": n,
                "mean_score": mean,
                "percent": pct,
            }));
        }
    }
    let scores: Vec<f64> = p.records.iter().map(|r| f64::from(r.score)).collect();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    b.tables.push(csv);
    b.put(
        "persuasiveness",
        Section::present(json!({
            "grid": grid,
            "conversations": scores.len(),
            "mean_score": mean,
            "percent": consensus_core::metrics::persuasiveness_percentage(mean),
            "skipped": p.skipped.len(),
        })),
    );
}

/// Nomination counts by kind of the nominated participant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Nominations {
    pub most_bot: u64,
    pub most_human: u64,
    pub least_bot: u64,
    pub least_human: u64,
}

pub fn count_nominations<'a>(games: impl IntoIterator<Item = &'a GameState>) -> Nominations {
    let mut n = Nominations::default();
    for g in games {
        for s in &g.surveys {
            for (name, most) in [(&s.most_convincing, true), (&s.least_convincing, false)] {
                let Some(p) = g.by_username(name) else { continue };
                match (most, p.kind) {
                    (true, ParticipantKind::Bot) => n.most_bot += 1,
                    (true, ParticipantKind::Human) => n.most_human += 1,
                    (false, ParticipantKind::Bot) => n.least_bot += 1,
                    (false, ParticipantKind::Human) => n.least_human += 1,
                }
            }
        }
    }
    n
}

/// Exact tests on both 2x2 readings of the nomination counts: rows are
/// the nomination question (most/least), or rows are the nominee kind.
pub fn nomination_tests(n: &Nominations) -> Value {
    let layouts = [
        ("rows_question_cols_kind", Table2x2::new([[n.most_bot, n.most_human], [n.least_bot, n.least_human]])),
        ("rows_kind_cols_question", Table2x2::new([[n.most_bot, n.least_bot], [n.most_human, n.least_human]])),
    ];
    let mut out = serde_json::Map::new();
    for (name, t) in layouts {
        let v = match (fisher_exact(&t), boschloo_exact(&t, DEFAULT_GRID, DEFAULT_CAP)) {
            (Ok(fp), Ok(bp)) => json!({ "table": t, "fisher_p": fp, "boschloo_p": bp }),
            (fp, bp) => json!({
                "table": t,
                "fisher_p": fp.ok(),
                "boschloo_p": bp.as_ref().ok(),
                "skipped": bp.err().map(|e| e.to_string()),
            }),
        };
        out.insert(name.into(), v);
    }
    Value::Object(out)
}

fn exit_survey_section(b: &mut Builder, games: &[&GameState]) {
    let surveys: usize = games.iter().map(|g| g.surveys.len()).sum();
    if surveys == 0 {
        b.put("exit_survey", Section::absent("no exit surveys in bot-human games"));
        return;
    }
    let n = count_nominations(games.iter().copied());
    b.put("exit_survey", Section::present(json!({ "surveys": surveys, "nominations": n, "tests": nomination_tests(&n) })));
}

fn perceived_section(b: &mut Builder, records: &[ChangeRecord]) {
    let mut by: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
    for r in records {
        by.entry(consensus_core::classify_assignment(r.kind, r.partner_kind).as_str()).or_default().push(f64::from(r.perceived));
    }
    if by.is_empty() {
        b.put("perceived_confidence", Section::absent("no re-evaluations"));
        return;
    }
    let mut csv = CsvTable::new("perceived_confidence", &["assignment", "level", "count"]);
    let mut out = serde_json::Map::new();
    for (a, xs) in &by {
        let mut hist = [0u32; 5];
        for x in xs {
            hist[*x as usize] += 1;
        }
        for (lvl, c) in hist.iter().enumerate() {
            csv.push(vec![(*a).into(), lvl.to_string(), c.to_string()]);
        }
        let nz: Vec<f64> = xs.iter().copied().filter(|x| *x > 0.0).collect();
        out.insert(
            (*a).into(),
            json!({ "histogram": hist, "mean_with_zeros": mean_or_null(xs), "mean_without_zeros": mean_or_null(&nz) }),
        );
    }
    let pairs = [("human-to-human", "human-to-bot"), ("bot-to-human", "human-to-human"), ("bot-to-bot", "bot-to-human")];
    let mut tests = serde_json::Map::new();
    for (x, y) in pairs {
        if let (Some(a), Some(c)) = (by.get(x), by.get(y)) {
            let nz = |v: &Vec<f64>| v.iter().copied().filter(|x| *x > 0.0).collect::<Vec<f64>>();
            tests.insert(
                format!("{x}_vs_{y}"),
                json!({ "with_zeros": welch(a, c), "without_zeros": welch(&nz(a), &nz(c)) }),
            );
        }
    }
    out.insert("tests".into(), Value::Object(tests));
    b.tables.push(csv);
    b.put("perceived_confidence", Section::present(Value::Object(out)));
}

fn distribution_section(b: &mut Builder, games: &[GameState]) {
    let d = distribution_summaries(games);
    let mut out = serde_json::Map::new();
    let mut kde_csv = CsvTable::new("kde", &["condition", "measure", "x", "density"]);
    let mut len_csv = CsvTable::new("conversation_lengths", &["condition", "type", "length", "count", "band_min", "band_max"]);
    for (c, s) in &d {
        let mut kdes = serde_json::Map::new();
        let as_f = |v: &[u32]| v.iter().map(|x| f64::from(*x)).collect::<Vec<f64>>();
        for (measure, xs) in [
            ("conversations_per_game", as_f(&s.conversations_per_game)),
            ("messages_per_conversation", as_f(&s.messages_per_conversation)),
            ("points", as_f(&s.points)),
        ] {
            if let Some(k) = gaussian_kde(&xs, KDE_POINTS) {
                for (x, y) in k.grid.iter().zip(&k.density) {
                    kde_csv.push(vec![c.as_str().into(), measure.into(), f(*x), f(*y)]);
                }
                kdes.insert(measure.into(), json!({ "bandwidth": k.bandwidth, "integral": k.integral() }));
            }
        }
        for (t, h) in &s.lengths {
            for (len, n) in &h.histogram {
                len_csv.push(vec![
                    c.as_str().into(),
                    t.as_str().into(),
                    len.to_string(),
                    n.to_string(),
                    h.budget_band.map(|r| r.min.to_string()).unwrap_or_default(),
                    h.budget_band.map(|r| r.max.to_string()).unwrap_or_default(),
                ]);
            }
        }
        out.insert(c.as_str().into(), json!({ "summary": s, "kde": kdes }));
    }
    b.tables.push(kde_csv);
    b.tables.push(len_csv);
    b.put("distributions", Section::present(Value::Object(out)));
}

fn present_categories(rows: &[HierRow], order: &[&str]) -> Vec<String> {
    order.iter().filter(|c| rows.iter().any(|r| r.category == **c)).map(|c| c.to_string()).collect()
}

fn fit_json(fit: &HierFit) -> Value {
    let draws = fit.category_draws();
    let mut pairs = Vec::new();
    for (i, a) in fit.categories.iter().enumerate() {
        for c in &fit.categories[i + 1..] {
            pairs.push((a.as_str(), c.as_str()));
        }
    }
    #[derive(Serialize)]
    struct Slim<'a> {
        numerator: &'a str,
        denominator: &'a str,
        odds_ratio: f64,
        hpd: Interval,
    }
    let contrasts: Vec<Value> = match posterior_contrasts(&draws, &pairs) {
        Ok(cs) => cs
            .iter()
            .map(|c| {
                json!(Slim { numerator: &c.numerator, denominator: &c.denominator, odds_ratio: c.odds_ratio, hpd: c.hpd })
            })
            .collect(),
        Err(e) => vec![json!({ "skipped": e.to_string() })],
    };
    json!({ "fit": fit, "contrasts": contrasts })
}

fn run_model(
    b: &mut Builder,
    name: &str,
    outcome: Outcome,
    rows: Vec<HierRow>,
    order: &[&str],
    random: Vec<Grouping>,
    mcmc: &McmcConfig,
) {
    if rows.is_empty() {
        b.put(name, Section::absent("no observations"));
        return;
    }
    let categories = present_categories(&rows, order);
    let spec = HierModelSpec {
        outcome,
        reference: categories[0].clone(),
        categories,
        random_intercepts: random,
        priors: Priors::default(),
        mcmc: *mcmc,
    };
    match fit_hierarchical(&spec, &rows) {
        Ok(fit) => {
            if let Some(w) = &fit.warning {
                b.warnings.push(format!("{name}: {w}"));
            }
            let mut csv = CsvTable::new(
                &name.replace("model_", "fit_"),
                &["parameter", "kind", "mean", "sd", "odds_ratio", "central_lo", "central_hi", "hpd_lo", "hpd_hi", "rhat"],
            );
            for p in &fit.params {
                csv.push(vec![
                    p.name.clone(),
                    format!("{:?}", p.kind).to_lowercase(),
                    f(p.mean),
                    f(p.sd),
                    f(p.odds_ratio),
                    f(p.central.lower),
                    f(p.central.upper),
                    f(p.hpd.lower),
                    f(p.hpd.upper),
                    f(p.rhat),
                ]);
            }
            b.tables.push(csv);
            b.put(name, Section::present(fit_json(&fit)));
        }
        Err(e) => b.put(name, Section::absent(format!("fit failed: {e}"))),
    }
}

fn model_sections(b: &mut Builder, records: &[ChangeRecord], mcmc: &McmcConfig) {
    let pid = |r: &ChangeRecord| format!("{}/{}", r.game_id, r.participant);
    let change_order: Vec<&str> = ChangeRow::ALL.iter().map(|r| r.label()).collect();
    let assignment_order: Vec<&str> = AssignmentType::ALL.iter().map(|a| a.as_str()).collect();
    let assignment = |r: &ChangeRecord| consensus_core::classify_assignment(r.kind, r.partner_kind).as_str().to_string();

    let rows = records
        .iter()
        .map(|r| HierRow { category: r.row.label().into(), game: r.game_id.clone(), participant: pid(r), outcome: u32::from(r.changed) })
        .collect();
    run_model(b, "model_opinion_change", Outcome::Binary, rows, &change_order, vec![Grouping::Game, Grouping::Participant], mcmc);

    let rows = records
        .iter()
        .map(|r| HierRow { category: assignment(r), game: r.game_id.clone(), participant: pid(r), outcome: u32::from(r.perceived) })
        .collect();
    run_model(
        b,
        "model_perceived_confidence",
        Outcome::Ordered { levels: 5 },
        rows,
        &assignment_order,
        vec![Grouping::Game, Grouping::Participant],
        mcmc,
    );

    let rows = records
        .iter()
        .map(|r| HierRow {
            category: assignment(r),
            game: r.game_id.clone(),
            participant: pid(r),
            outcome: (i32::from(r.personal_after) - i32::from(r.personal_before) + 3) as u32,
        })
        .collect();
    run_model(
        b,
        "model_personal_confidence_change",
        Outcome::Ordered { levels: 7 },
        rows,
        &assignment_order,
        Vec::new(),
        mcmc,
    );
}

/// Writes the report and, when `csv_dir` is given, one CSV per table.
pub fn write_outputs(report: &Report, tables: &[CsvTable], out: &Path, csv_dir: Option<&Path>) -> anyhow::Result<Vec<PathBuf>> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, serde_json::to_string_pretty(report)? + "\n")?;
    let mut written = vec![out.to_path_buf()];
    if let Some(dir) = csv_dir {
        std::fs::create_dir_all(dir)?;
        for t in tables {
            let path = dir.join(format!("{}.csv", t.name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&t.header)?;
            for r in &t.rows {
                w.write_record(r)?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use consensus_core::agent::{PromptTemplates, StubScripts};
    use consensus_core::sim::{game_seed, simulate_game, stub_pool, SimSetup};
    use consensus_core::GameConfig;
    use std::sync::Arc;

    fn games(condition: Condition, n: u32) -> Vec<GameState> {
        let setup = SimSetup::new(stub_pool(StubScripts::default()), Arc::new(PromptTemplates::default()));
        (0..n)
            .map(|i| {
                let id = format!("{condition}-{i}");
                simulate_game(&id, GameConfig::new(condition, game_seed(3, i)), &setup).unwrap().state
            })
            .collect()
    }

    fn quick() -> AnalyzeOptions {
        AnalyzeOptions { mcmc: McmcConfig { chains: 2, iterations: 400, warmup: None, seed: 1 }, fit_models: true }
    }

    fn collect_p(v: &Value, out: &mut Vec<f64>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    if k == "p" || k.ends_with("_p") {
                        if let Some(p) = x.as_f64() {
                            out.push(p);
                        }
                    }
                    collect_p(x, out);
                }
            }
            Value::Array(a) => a.iter().for_each(|x| collect_p(x, out)),
            _ => {}
        }
    }

    #[test]
    fn bot_only_logs_flag_missing_sections() {
        let (r, _) = analyze(&games(Condition::BotOnly, 3), &quick());
        assert_eq!(r.status, Status::Warning);
        for s in ["timing_HH", "timing_BH", "timing_HO", "ai_flags", "persuasiveness", "exit_survey"] {
            assert!(!r.sections[s].present, "{s}");
        }
        let oc = r.sections["opinion_change"].data.as_ref().unwrap();
        assert_eq!(oc["conserved"], true);
        assert!(r.sections["model_opinion_change"].present);
    }

    #[test]
    fn mixed_logs_fill_every_section() {
        let mut all = games(Condition::BotHuman, 4);
        all.extend(games(Condition::HumanOnly, 2));
        all.extend(games(Condition::BotOnly, 1));
        let (r, tables) = analyze(&all, &quick());
        for (name, s) in &r.sections {
            assert!(s.present, "{name}: {:?}", s.reason);
        }
        let grid = r.sections["persuasiveness"].data.as_ref().unwrap()["grid"].as_array().unwrap().len();
        assert_eq!(grid, 9);
        let mut ps = Vec::new();
        for s in r.sections.values() {
            collect_p(s.data.as_ref().unwrap(), &mut ps);
        }
        assert!(ps.len() > 5);
        assert!(ps.iter().all(|p| (0.0..=1.0).contains(p)), "{ps:?}");
        assert!(tables.iter().any(|t| t.name == "opinion_change"));

        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r/report.json");
        let written = write_outputs(&r, &tables, &out, Some(&dir.path().join("csv"))).unwrap();
        assert_eq!(written.len(), tables.len() + 1);
        let back: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
        assert_eq!(back["report_version"], 1);
    }

    #[test]
    fn nomination_layouts() {
        let n = Nominations { most_bot: 24, most_human: 18, least_bot: 11, least_human: 31 };
        let v = nomination_tests(&n);
        for layout in ["rows_question_cols_kind", "rows_kind_cols_question"] {
            let (fp, bp) = (v[layout]["fisher_p"].as_f64().unwrap(), v[layout]["boschloo_p"].as_f64().unwrap());
            assert!(bp <= fp + 1e-12 && bp > 0.0, "{layout}: {bp} {fp}");
        }
    }
}
